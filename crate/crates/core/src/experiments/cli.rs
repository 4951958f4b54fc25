//! Command line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::output::{fmt_eoc, CONVERGENCE_VERSION};
use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "chf", about = "Cahn-Hilliard-Forchheimer finite element solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file or preset name (e.g. exp1_s2_g0)
    #[arg(long, default_value = "exp1_s2_g0")]
    config: String,
    /// Output directory; overrides the config's `outdir`
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time-dependent simulation on the configured level
    Run {
        #[command(flatten)]
        common: Common,
        /// Mesh level; overrides the config
        #[arg(long)]
        level: Option<usize>,
    },
    /// Nested-mesh convergence study
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Manufactured-solution and regularization studies of the Forchheimer problem
    Forchheimer {
        #[command(flatten)]
        common: Common,
    },
    /// Inequality, chain-rule and Jacobian checks
    Selftest,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let outdir = common.outdir.clone().unwrap_or_else(|| cfg.outdir.clone());
    std::fs::create_dir_all(&outdir)?;
    std::fs::write(outdir.join("config.toml"), cfg.to_toml())?;
    Ok((cfg, outdir))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, level } => {
            let (cfg, outdir) = load(&common)?;
            let level = level.unwrap_or(cfg.level);
            let out = super::run_experiment(&cfg, level, Some(&outdir))?;
            println!(
                "{} steps on level {level}: mass drift {:.3e}, cumulative mass defect {:.3e}, max scaled energy defect {:.3e}, max phi {:.6}",
                out.report.rows.len() - 1,
                out.report.mass_drift(),
                out.report.cumulative_mass_defect(),
                out.report.max_scaled_energy_defect(),
                out.max_phi
            );
            println!("wrote {}", outdir.display());
        }
        Command::Converge { common } => {
            let (cfg, outdir) = load(&common)?;
            let report = super::convergence_study(&cfg)?;
            std::fs::write(outdir.join("convergence.csv"), report.to_csv())?;
            for r in &report.rows {
                println!(
                    "k={} phi {:.3e} ({}) mu {:.3e} ({}) v {:.3e} ({}) p {:.3e} ({})",
                    r.k,
                    r.err[0],
                    fmt_eoc(r.eoc[0]),
                    r.err[1],
                    fmt_eoc(r.eoc[1]),
                    r.err[2],
                    fmt_eoc(r.eoc[2]),
                    r.err[3],
                    fmt_eoc(r.eoc[3])
                );
            }
        }
        Command::Forchheimer { common } => {
            let (cfg, outdir) = load(&common)?;
            let f = &cfg.forchheimer;
            let newton = cfg.newton_config();
            let rows = super::forchheimer_study(&f.levels, f.s, f.alpha, f.beta, &newton)?;
            let mut csv = format!("{CONVERGENCE_VERSION}\nk,err_v_l2,err_p_l2,newton_iterations\n");
            for r in &rows {
                csv.push_str(&format!("{},{:.6e},{:.6e},{}\n", r.k, r.err_v, r.err_p, r.iterations));
                println!("k={} |v - v*| {:.3e} |p - p*| {:.3e} newton {}", r.k, r.err_v, r.err_p, r.iterations);
            }
            std::fs::write(outdir.join("forchheimer.csv"), csv)?;
            let ms = super::manufactured_forchheimer(f.s, f.alpha, f.beta);
            let reg = super::regularization_study(f.reg_level, &ms.problem, &f.reg_n, &newton)?;
            let mut csv = String::from("n,dist_v_l2\n");
            for (n, d) in &reg {
                csv.push_str(&format!("{n},{d:.6e}\n"));
                println!("n={n} |v_n - v| {d:.3e}");
            }
            std::fs::write(outdir.join("regularization.csv"), csv)?;
        }
        Command::Selftest => {
            let checks = super::selftest::run_all()?;
            let mut ok = true;
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Err(Error::CheckFailed("selftest".into()));
            }
        }
    }
    Ok(())
}

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
