//! Quick internal consistency checks behind the `selftest` subcommand.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::assembly::chf::ChfSystem;
use crate::assembly::Assembler;
use crate::chf_scheme::ModelParams;
use crate::diagnostics::chain_rule_defect;
use crate::error::Result;
use crate::forchheimer::check_inequalities;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_vec(rng: &mut StdRng) -> [f64; 2] {
    let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
    [scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)]
}

/// Worst scaled slack over `pairs` random pairs for each exponent.
pub fn inequality_suite(pairs: usize, seed: u64) -> Vec<Check> {
    let mut rng = StdRng::seed_from_u64(seed);
    [1.5, 2.0, 3.0]
        .iter()
        .map(|&s| {
            let mut worst = f64::INFINITY;
            for _ in 0..pairs {
                let (x, y) = (random_vec(&mut rng), random_vec(&mut rng));
                let sl = check_inequalities(x, y, s);
                for i in 0..4 {
                    worst = worst.min(sl.slack[i] / sl.scale[i]);
                }
            }
            Check {
                name: format!("forchheimer inequalities s={s}"),
                passed: worst >= -1e-12,
                detail: format!("{pairs} pairs, worst scaled slack {worst:.3e}"),
            }
        })
        .collect()
}

pub fn chain_rule_check(asm: &Assembler, trials: usize, seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a: Vec<f64> = (0..asm.n_cg()).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let b: Vec<f64> = (0..asm.n_cg()).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let tau = 1e-2;
        let scale = asm.integrate(|t, q| {
            let (x, y) = (asm.cg_value(&a, t, &q.l), asm.cg_value(&b, t, &q.l));
            crate::chf_scheme::psi_quartic(x).abs() + crate::chf_scheme::psi_quartic(y).abs()
        }) / tau;
        worst = worst.max(chain_rule_defect(asm, &a, &b, tau) / scale.max(1.0));
    }
    Check {
        name: "discrete chain rule".into(),
        passed: worst <= 1e-12,
        detail: format!("{trials} random pairs, worst scaled defect {worst:.3e}"),
    }
}

/// Directional central differences of the coupled residual against the
/// assembled Jacobian at random states.
pub fn jacobian_check(asm: &Assembler, states: usize, seed: u64) -> Result<Check> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (s, gamma) in [(1.0, 0.0), (2.0, 1.0), (3.0, 0.0), (3.0, 1.0)] {
        let mut params = ModelParams::simple(1e-3, s, gamma, 1e-2, 1.0);
        params.gamma_v = std::sync::Arc::new(|phi| phi - 0.5);
        params.gamma_phi = std::sync::Arc::new(|phi| 0.1 * phi * (1.0 - phi));
        params.mobility = std::sync::Arc::new(|phi| 1.0 + phi * phi);
        for _ in 0..states {
            let phi0: Vec<f64> = (0..asm.n_cg()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sys = ChfSystem::new(asm, &params, &phi0)?;
            let x: Vec<f64> = (0..sys.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..sys.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jd = sys.jacobian(&x)?.mul_vec(&d);
            let h = 1e-6;
            let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - h * b).collect();
            let (rp, rm) = (sys.residual(&xp)?, sys.residual(&xm)?);
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..jd.len() {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                num = num.max((fd - jd[i]).abs());
                den = den.max(jd[i].abs());
            }
            worst = worst.max(num / den.max(1e-300));
        }
    }
    Ok(Check {
        name: "jacobian vs finite differences".into(),
        passed: worst <= 1e-5,
        detail: format!("worst relative error {worst:.3e}"),
    })
}

pub fn run_all() -> Result<Vec<Check>> {
    let asm = Assembler::new(super::mesh_level(2)?)?;
    let mut checks = inequality_suite(10_000, 1);
    checks.push(chain_rule_check(&asm, 20, 2));
    checks.push(jacobian_check(&asm, 2, 3)?);
    Ok(checks)
}
