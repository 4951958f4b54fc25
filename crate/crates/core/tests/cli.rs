use std::path::Path;
use std::process::Command;

fn chf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chf")).args(args).output().expect("binary runs")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            chf_core::experiments::ExperimentConfig::load(p.to_str().unwrap())
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}

#[test]
fn run_writes_versioned_ledger_with_constant_mass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "preset = \"exp2_g0\"\nlevel = 2\nt_final = 0.05\nvtk_every = 5\n").unwrap();
    let out = chf(&["run", "--config", cfg.to_str().unwrap(), "--outdir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# chf-ledger v1"));
    assert_eq!(lines.next(), Some("t,mass,energy,diss_inc,prod_inc,mass_defect,energy_defect,boundary_flux"));
    let masses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(masses.len(), 11);
    assert!(masses.iter().all(|m| (m - masses[0]).abs() < 1e-11));
    for k in [0, 5, 10] {
        assert!(dir.path().join(format!("phi_{k:04}.vtk")).exists());
    }
}

#[test]
fn exit_codes() {
    assert_eq!(chf(&["run", "--config", "exp9_g0"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "level = 2\nt_final = \"soon\"\n").unwrap();
    let out = chf(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("t_final") && err.contains("line 2"), "{err}");
    // a Newton budget of one iteration cannot converge the first step
    std::fs::write(&cfg, "level = 1\nt_final = 0.01\n[newton]\ntol = 1e-11\nmax_iter = 1\nmin_step = 0.5\n").unwrap();
    let out = chf(&["run", "--config", cfg.to_str().unwrap(), "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selftest_passes() {
    let out = chf(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 5);
}

#[test]
fn forchheimer_subcommand_reports_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("f.toml");
    std::fs::write(
        &cfg,
        "[forchheimer]\ns = 3.0\nalpha = 1.0\nbeta = 2.0\nlevels = [1, 2, 3]\nreg_level = 2\nreg_n = [10.0, 100.0]\n",
    )
    .unwrap();
    let out = chf(&["forchheimer", "--config", cfg.to_str().unwrap(), "--outdir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("forchheimer.csv")).unwrap();
    let errs: Vec<f64> = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    let reg = std::fs::read_to_string(dir.path().join("regularization.csv")).unwrap();
    assert_eq!(reg.lines().count(), 3);
}
