//! The two phase-field experiments, the nested-mesh convergence harness and
//! the standalone Forchheimer studies.

pub mod cli;
pub mod config;
pub mod output;
pub mod selftest;

use std::path::Path;
use std::sync::Arc;

use crate::assembly::{Assembler, Form};
use crate::chf_scheme::{run, TimeStepState};
use crate::diagnostics::{mass, BalanceReport, BalanceRow};
use crate::error::{Error, Result};
use crate::fe::{interpolate, prolong, FeField, Function};
use crate::forchheimer::{solve_forchheimer, ForchheimerProblem};
use crate::linalg::NewtonConfig;
use crate::mesh::{Mesh, Point};

pub use config::{ExperimentConfig, InitialCondition, Sources};
use output::{fmt_eoc, LedgerWriter, CONVERGENCE_HEADER, CONVERGENCE_VERSION};

/// Meshes `0..=max_level`; level `k` is the `2 x 2` square refined `k` times,
/// so `h_k = 2^{-1-k}` and each level carries the parent map of the previous.
pub fn mesh_hierarchy(max_level: usize) -> Result<Vec<Arc<Mesh>>> {
    let mut meshes = vec![Arc::new(Mesh::unit_square(2)?)];
    for _ in 0..max_level {
        let next = meshes.last().unwrap().refine_uniform()?;
        meshes.push(Arc::new(next));
    }
    Ok(meshes)
}

pub fn mesh_level(k: usize) -> Result<Arc<Mesh>> {
    Ok(mesh_hierarchy(k)?.pop().unwrap())
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: BalanceReport,
    pub final_state: TimeStepState,
    /// Newton iterations per step.
    pub iterations: Vec<usize>,
    /// Largest nodal value of `phi` over all time levels.
    pub max_phi: f64,
}

/// Interpolated initial state of `cfg` on `asm`.
pub fn initial_state(cfg: &ExperimentConfig, asm: &Assembler) -> Result<TimeStepState> {
    let f = cfg.initial_condition();
    let phi = interpolate(&asm.cg, Function::Scalar(&f))?;
    TimeStepState::initial(asm, phi.coeffs)
}

/// Runs `cfg` on mesh `level`. With `outdir`, writes `ledger.csv` and VTK
/// snapshots every `cfg.vtk_every` steps.
pub fn run_experiment(cfg: &ExperimentConfig, level: usize, outdir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let asm = Assembler::new(mesh_level(level)?)?;
    let init = initial_state(cfg, &asm)?;
    let params = cfg.model_params(mass(&asm, &init.phi.coeffs));
    let mut report = BalanceReport::default();
    report.push(BalanceRow::initial(&asm, &params, &init));
    let mut ledger = match outdir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let mut w = LedgerWriter::create(&d.join("ledger.csv"))?;
            w.write(&report.rows[0])?;
            Some(w)
        }
        None => None,
    };
    let snapshot = |k: usize, st: &TimeStepState| -> Result<()> {
        if let Some(d) = outdir {
            if cfg.vtk_every > 0 && k.is_multiple_of(cfg.vtk_every) {
                output::write_vtk(&d.join(format!("phi_{k:04}.vtk")), st)?;
            }
        }
        Ok(())
    };
    snapshot(0, &init)?;
    let max0 = init.phi.coeffs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut max_phi = max0;
    let mut iterations = Vec::with_capacity(params.n_steps());
    let final_state = run(&asm, &params, init, |k, old, new, info| {
        let row = BalanceRow::for_step(&asm, &params, old, new);
        if let Some(w) = ledger.as_mut() {
            w.write(&row)?;
        }
        report.push(row);
        iterations.push(info.newton.iterations);
        max_phi = new.phi.coeffs.iter().fold(max_phi, |m, v| m.max(*v));
        snapshot(k, new)
    })?;
    if let Some(w) = ledger {
        w.finish()?;
    }
    Ok(RunOutput { report, final_state, iterations, max_phi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub k: usize,
    /// `[phi, mu, v, p]`, squared norms of the difference to level `k + 1`.
    pub err: [f64; 4],
    /// `log2(err_{k-1} / err_k)`, undefined on the first row.
    pub eoc: [Option<f64>; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    fn from_errors(levels: &[usize], errs: Vec<[f64; 4]>) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(errs.len());
        for (i, err) in errs.into_iter().enumerate() {
            let mut eoc = [None; 4];
            if let Some(prev) = rows.last() {
                for j in 0..4 {
                    let (a, b) = (prev.err[j], err[j]);
                    if a > 0.0 && b > 0.0 {
                        eoc[j] = Some((a / b).log2());
                    }
                }
            }
            rows.push(ConvergenceRow { k: levels[i], err, eoc });
        }
        ConvergenceReport { rows }
    }

    pub fn finest(&self) -> Option<&ConvergenceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CONVERGENCE_VERSION}\n{CONVERGENCE_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.k.to_string());
            for j in 0..4 {
                s.push_str(&format!(",{:.6e},{}", r.err[j], fmt_eoc(r.eoc[j])));
            }
            s.push('\n');
        }
        s
    }
}

/// Squared `[H1, H1, L2_div, L2]` norms on a fine level.
struct FineNorms {
    h1: crate::sparse::SparseMatrix,
    hdiv: crate::sparse::SparseMatrix,
    l2: crate::sparse::SparseMatrix,
}

impl FineNorms {
    fn new(asm: &Assembler) -> Self {
        let sum = |a: crate::sparse::SparseMatrix, b: crate::sparse::SparseMatrix| {
            let mut t = crate::sparse::TripletBuilder::with_capacity(a.nrows(), a.ncols(), a.nnz() + b.nnz());
            t.push_block(&a, 0, 0, 1.0);
            t.push_block(&b, 0, 0, 1.0);
            t.build()
        };
        FineNorms {
            h1: sum(asm.assemble(Form::CgMass), asm.assemble(Form::CgStiffness)),
            hdiv: sum(asm.assemble(Form::RtMass), asm.assemble(Form::DivDiv)),
            l2: asm.assemble(Form::DgMass),
        }
    }

    fn diff(m: &crate::sparse::SparseMatrix, coarse: &FeField, fine: &FeField) -> Result<f64> {
        let p = prolong(coarse, &fine.space)?;
        let d: Vec<f64> = p.coeffs.iter().zip(&fine.coeffs).map(|(a, b)| a - b).collect();
        Ok(m.form(&d, &d).max(0.0))
    }

    /// Error quantities between a coarse trajectory and the next finer one.
    fn errors(&self, coarse: &[TimeStepState], fine: &[TimeStepState], tau: f64) -> Result<[f64; 4]> {
        if coarse.len() != fine.len() {
            return Err(Error::DimensionMismatch("trajectories of different length".into()));
        }
        let mut e = [0.0f64; 4];
        for (n, (c, f)) in coarse.iter().zip(fine).enumerate() {
            e[0] = e[0].max(Self::diff(&self.h1, &c.phi, &f.phi)?);
            if n > 0 {
                e[1] += tau * Self::diff(&self.h1, &c.mu, &f.mu)?;
                e[2] += tau * Self::diff(&self.hdiv, &c.v, &f.v)?;
                e[3] += tau * Self::diff(&self.l2, &c.p, &f.p)?;
            }
        }
        Ok(e)
    }
}

/// Runs `cfg` on every level of `cfg.levels` (in parallel) and compares each
/// level with the next finer one. Rows are produced for all but the finest
/// level.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let levels = &cfg.levels;
    if levels.len() < 2 {
        return Err(Error::Config("convergence study needs at least two levels".into()));
    }
    let meshes = mesh_hierarchy(*levels.last().unwrap())?;
    let asms: Vec<Assembler> =
        levels.iter().map(|&k| Assembler::new(meshes[k].clone())).collect::<Result<_>>()?;
    let trajectories: Vec<Result<Vec<TimeStepState>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = asms
            .iter()
            .map(|asm| {
                scope.spawn(move || {
                    let init = initial_state(cfg, asm)?;
                    let params = cfg.model_params(mass(asm, &init.phi.coeffs));
                    crate::chf_scheme::trajectory(asm, &params, init)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("level thread panicked")).collect()
    });
    let trajectories: Vec<Vec<TimeStepState>> = trajectories.into_iter().collect::<Result<_>>()?;
    let mut errs = Vec::with_capacity(levels.len() - 1);
    for i in 0..levels.len() - 1 {
        let norms = FineNorms::new(&asms[i + 1]);
        errs.push(norms.errors(&trajectories[i], &trajectories[i + 1], cfg.tau)?);
    }
    Ok(ConvergenceReport::from_errors(&levels[..levels.len() - 1], errs))
}

/// Smooth manufactured pair for the Forchheimer problem with `p* = 0` on the
/// boundary: `v* = (y (1 - y) + x^2, sin(pi x) / 4)`, `p* = x (1 - x) y (1 - y)`.
pub struct Manufactured {
    pub problem: ForchheimerProblem,
    pub v: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    pub p: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

pub fn manufactured_forchheimer(s: f64, alpha: f64, beta: f64) -> Manufactured {
    use std::f64::consts::PI;
    let v = |[x, y]: Point| [y * (1.0 - y) + x * x, (PI * x).sin() / 4.0];
    let grad_p = |[x, y]: Point| [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)];
    let f = move |x: Point| {
        let vx = v(x);
        let w = alpha + beta * crate::forchheimer::drag_weight(vx[0] * vx[0] + vx[1] * vx[1], s);
        let g = grad_p(x);
        [w * vx[0] + g[0], w * vx[1] + g[1]]
    };
    Manufactured {
        problem: ForchheimerProblem {
            s,
            alpha: Arc::new(move |_| alpha),
            beta: Arc::new(move |_| beta),
            f: Arc::new(f),
            g: Arc::new(|[x, _]: Point| 2.0 * x),
            h: Arc::new(|_| 0.0),
        },
        v: Arc::new(v),
        p: Arc::new(|[x, y]: Point| x * (1.0 - x) * y * (1.0 - y)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForchheimerRow {
    pub k: usize,
    pub err_v: f64,
    pub err_p: f64,
    pub iterations: usize,
}

/// Manufactured-solution errors `|v_h - v*|_L2`, `|p_h - p*|_L2` per level.
pub fn forchheimer_study(levels: &[usize], s: f64, alpha: f64, beta: f64, cfg: &NewtonConfig) -> Result<Vec<ForchheimerRow>> {
    let ms = manufactured_forchheimer(s, alpha, beta);
    let meshes = mesh_hierarchy(levels.iter().copied().max().unwrap_or(0))?;
    let mut rows = Vec::new();
    for &k in levels {
        let asm = Assembler::new(meshes[k].clone())?;
        let sol = solve_forchheimer(&asm, &ms.problem, None, None, cfg)?;
        let err_v = asm
            .integrate(|t, q| {
                let (vh, _) = asm.rt_value(&sol.v.coeffs, t, q);
                let ve = (ms.v)(q.x);
                (vh[0] - ve[0]).powi(2) + (vh[1] - ve[1]).powi(2)
            })
            .sqrt();
        let err_p = asm.integrate(|t, q| (asm.dg_value(&sol.p.coeffs, t, &q.l) - (ms.p)(q.x)).powi(2)).sqrt();
        rows.push(ForchheimerRow { k, err_v, err_p, iterations: sol.newton.iterations });
    }
    Ok(rows)
}

/// `|v_n - v_inf|_L2` for each regularization parameter `n`; every
/// regularized solve starts from the unregularized solution.
pub fn regularization_study(level: usize, problem: &ForchheimerProblem, ns: &[f64], cfg: &NewtonConfig) -> Result<Vec<(f64, f64)>> {
    let asm = Assembler::new(mesh_level(level)?)?;
    let base = solve_forchheimer(&asm, problem, None, None, cfg)?;
    let mass = asm.assemble(Form::RtMass);
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let sol = solve_forchheimer(&asm, problem, Some(n), Some(base.newton.x.clone()), cfg)?;
        let d: Vec<f64> = sol.v.coeffs.iter().zip(&base.v.coeffs).map(|(a, b)| a - b).collect();
        out.push((n, mass.form(&d, &d).max(0.0).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_sizes() {
        let m = mesh_hierarchy(3).unwrap();
        assert_eq!(m.len(), 4);
        for (k, mesh) in m.iter().enumerate() {
            let n = 2usize << k;
            assert_eq!(mesh.n_triangles(), 2 * n * n);
            assert!((mesh.h_max - 2f64.sqrt() / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn eoc_of_identical_levels_is_undefined() {
        let r = ConvergenceReport::from_errors(&[1, 2, 3], vec![[0.0; 4], [0.0; 4], [0.0; 4]]);
        assert!(r.rows.iter().all(|row| row.eoc.iter().all(Option::is_none)));
        let r = ConvergenceReport::from_errors(&[1, 2], vec![[4.0, 1.0, 1.0, 1.0], [1.0, 0.5, 1.0, 0.0]]);
        assert_eq!(r.rows[1].eoc, [Some(2.0), Some(1.0), Some(0.0), None]);
        assert!(r.to_csv().lines().nth(2).unwrap().contains("n/a"));
    }

    #[test]
    fn flat_equilibrium_has_zero_errors() {
        // phi = 0 with the inconsistent sources is a steady state on every level
        let cfg = ExperimentConfig {
            levels: vec![0, 1, 2],
            t_final: 0.015,
            eps2: 1e-4,
            ..ExperimentConfig::preset("converge_g1").unwrap()
        };
        let meshes = mesh_hierarchy(2).unwrap();
        let asms: Vec<_> = meshes.iter().map(|m| Assembler::new(m.clone()).unwrap()).collect();
        let params = cfg.model_params(0.0);
        let trajs: Vec<_> = asms
            .iter()
            .map(|a| {
                let init = TimeStepState::initial(a, vec![0.0; a.n_cg()]).unwrap();
                crate::chf_scheme::trajectory(a, &params, init).unwrap()
            })
            .collect();
        let mut errs = Vec::new();
        for i in 0..2 {
            errs.push(FineNorms::new(&asms[i + 1]).errors(&trajs[i], &trajs[i + 1], cfg.tau).unwrap());
        }
        let r = ConvergenceReport::from_errors(&[0, 1], errs);
        assert!(r.rows.iter().all(|row| row.err == [0.0; 4] && row.eoc.iter().all(Option::is_none)));
    }

    #[test]
    fn manufactured_data_is_consistent() {
        let ms = manufactured_forchheimer(2.0, 1.0, 1.0);
        // div v* = 2x, p* vanishes on the boundary
        assert_eq!((ms.problem.g)([0.25, 0.9]), 0.5);
        assert_eq!((ms.p)([0.0, 0.3]), 0.0);
        assert_eq!((ms.p)([0.4, 1.0]), 0.0);
        let x = [0.3, 0.6];
        let v = (ms.v)(x);
        let f = (ms.problem.f)(x);
        let w = 1.0 + (v[0] * v[0] + v[1] * v[1]).sqrt();
        let gp = [(1.0 - 0.6) * 0.6 * 0.4, 0.3 * 0.7 * (1.0 - 1.2)];
        assert!((f[0] - (w * v[0] + gp[0])).abs() < 1e-14);
        assert!((f[1] - (w * v[1] + gp[1])).abs() < 1e-14);
    }

    #[test]
    fn short_run_ledger_and_snapshots() {
        let cfg = ExperimentConfig { t_final: 0.01, vtk_every: 1, ..ExperimentConfig::preset("exp2_g0").unwrap() };
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, 1, Some(dir.path())).unwrap();
        assert_eq!(out.report.rows.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(dir.path().join("phi_0002.vtk").exists());
        assert!(out.report.mass_drift() < 1e-12);
    }
}
