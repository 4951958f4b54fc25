//! Fully discrete time stepping for the coupled Cahn-Hilliard-Forchheimer
//! system: CG1 phase field and chemical potential, RT1 velocity, DG1 pressure.
//!
//! All coefficient functions and the transported phase field are frozen at
//! the previous time level; only the potential term is implicit. For `gamma =
//! 0` the pressure unknown is the Korteweg-shifted pressure `p - phi mu`, for
//! `gamma = 1` it is the physical pressure.

use std::fmt;
use std::sync::Arc;

use crate::assembly::chf::ChfSystem;
use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::fe::FeField;
use crate::linalg::{newton_solve, NewtonConfig, NewtonOutcome};

pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `Psi(phi) = phi^2 (1 - phi)^2 / 4`.
pub fn psi_quartic(phi: f64) -> f64 {
    let a = phi * (1.0 - phi);
    0.25 * a * a
}

pub fn psi_prime_quartic(phi: f64) -> f64 {
    0.5 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

pub fn psi_second_quartic(phi: f64) -> f64 {
    0.5 * (1.0 - 6.0 * phi + 6.0 * phi * phi)
}

/// Simpson average of `Psi'` along the segment from `phi_old` to `phi_new`.
/// Exact for the quartic potential, so `(psi_prime_av, new - old)` equals
/// `Psi(new) - Psi(old)` pointwise.
pub fn psi_prime_av(phi_new: f64, phi_old: f64) -> f64 {
    let mid = 0.5 * (phi_new + phi_old);
    (psi_prime_quartic(phi_new) + 4.0 * psi_prime_quartic(mid) + psi_prime_quartic(phi_old)) / 6.0
}

/// Derivative of [`psi_prime_av`] with respect to `phi_new`.
pub fn psi_prime_av_dnew(phi_new: f64, phi_old: f64) -> f64 {
    let mid = 0.5 * (phi_new + phi_old);
    (psi_second_quartic(phi_new) + 2.0 * psi_second_quartic(mid)) / 6.0
}

#[derive(Clone)]
pub struct ModelParams {
    pub eps2: f64,
    /// Forchheimer exponent; `s = 1` is the Darcy reference.
    pub s: f64,
    /// Boundary regime, 0 or 1.
    pub gamma: f64,
    pub tau: f64,
    pub t_final: f64,
    pub alpha: CoefFn,
    pub beta: CoefFn,
    pub mobility: CoefFn,
    pub gamma_phi: CoefFn,
    pub gamma_v: CoefFn,
    pub newton: NewtonConfig,
}

impl fmt::Debug for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelParams")
            .field("eps2", &self.eps2)
            .field("s", &self.s)
            .field("gamma", &self.gamma)
            .field("tau", &self.tau)
            .field("t_final", &self.t_final)
            .field("newton", &self.newton)
            .finish_non_exhaustive()
    }
}

impl ModelParams {
    /// Constant coefficients and no sources; handy for tests.
    pub fn simple(eps2: f64, s: f64, gamma: f64, tau: f64, t_final: f64) -> Self {
        ModelParams {
            eps2,
            s,
            gamma,
            tau,
            t_final,
            alpha: Arc::new(|_| 1.0),
            beta: Arc::new(|_| 1.0),
            mobility: Arc::new(|_| 1.0),
            gamma_phi: Arc::new(|_| 0.0),
            gamma_v: Arc::new(|_| 0.0),
            newton: NewtonConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps2 > 0.0) || !(self.tau > 0.0) || !(self.t_final > 0.0) {
            return bad(format!("eps2, tau and T must be positive: {self:?}"));
        }
        if !(self.s >= 1.0) || !self.s.is_finite() {
            return bad(format!("exponent s = {} must be at least 1", self.s));
        }
        if self.gamma != 0.0 && self.gamma != 1.0 {
            return bad(format!("gamma = {} must be 0 or 1", self.gamma));
        }
        self.newton.validate()?;
        for i in 0..=300 {
            let phi = -1.0 + 3.0 * i as f64 / 300.0;
            for (name, f) in [("alpha", &self.alpha), ("beta", &self.beta), ("mobility", &self.mobility)] {
                let v = f(phi);
                if !(v > 0.0) || !v.is_finite() {
                    return bad(format!("{name}({phi}) = {v} is not positive"));
                }
            }
            for (name, f) in [("gamma_phi", &self.gamma_phi), ("gamma_v", &self.gamma_v)] {
                if !f(phi).is_finite() {
                    return bad(format!("{name}({phi}) is not finite"));
                }
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct TimeStepState {
    pub t: f64,
    pub phi: FeField,
    pub mu: FeField,
    pub v: FeField,
    /// Shifted pressure `p - phi mu` when `gamma = 0`, physical pressure otherwise.
    pub p: FeField,
}

impl TimeStepState {
    /// State at `t = 0` with the given phase field and zero for the other unknowns.
    pub fn initial(asm: &Assembler, phi: Vec<f64>) -> Result<Self> {
        Ok(TimeStepState {
            t: 0.0,
            phi: FeField::from_coeffs(&asm.cg, phi)?,
            mu: FeField::zeros(&asm.cg),
            v: FeField::zeros(&asm.rt),
            p: FeField::zeros(&asm.dg),
        })
    }

    /// Concatenated unknown vector `[phi | mu | v | p]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(
            self.phi.coeffs.len() + self.mu.coeffs.len() + self.v.coeffs.len() + self.p.coeffs.len(),
        );
        x.extend_from_slice(&self.phi.coeffs);
        x.extend_from_slice(&self.mu.coeffs);
        x.extend_from_slice(&self.v.coeffs);
        x.extend_from_slice(&self.p.coeffs);
        x
    }

    pub fn unpack(asm: &Assembler, t: f64, x: &[f64]) -> Result<Self> {
        let (nv, nr, nq) = (asm.n_cg(), asm.n_rt(), asm.n_dg());
        if x.len() != 2 * nv + nr + nq {
            return Err(Error::DimensionMismatch(format!("state vector of length {}", x.len())));
        }
        Ok(TimeStepState {
            t,
            phi: FeField::from_coeffs(&asm.cg, x[..nv].to_vec())?,
            mu: FeField::from_coeffs(&asm.cg, x[nv..2 * nv].to_vec())?,
            v: FeField::from_coeffs(&asm.rt, x[2 * nv..2 * nv + nr].to_vec())?,
            p: FeField::from_coeffs(&asm.dg, x[2 * nv + nr..].to_vec())?,
        })
    }
}

/// Where Newton starts for the new time level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    Previous,
    Zero,
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub newton: NewtonOutcome,
}

/// One step of the scheme from `state` with Newton started from `guess`.
pub fn step_with(
    asm: &Assembler,
    params: &ModelParams,
    state: &TimeStepState,
    guess: InitialGuess,
) -> Result<(TimeStepState, StepInfo)> {
    let sys = ChfSystem::new(asm, params, &state.phi.coeffs)?;
    let x0 = match guess {
        InitialGuess::Previous => state.pack(),
        InitialGuess::Zero => vec![0.0; sys.ndofs()],
    };
    let out = newton_solve(|x| sys.residual(x), |x| sys.jacobian(x), x0, &params.newton)?;
    let next = TimeStepState::unpack(asm, state.t + params.tau, &out.x)?;
    Ok((next, StepInfo { newton: out }))
}

pub fn step(asm: &Assembler, params: &ModelParams, state: &TimeStepState) -> Result<TimeStepState> {
    step_with(asm, params, state, InitialGuess::Previous).map(|(s, _)| s)
}

/// Runs `n_steps` steps from `initial`, calling `observe(k, old, new, info)`
/// after each step. Returns the final state.
pub fn run(
    asm: &Assembler,
    params: &ModelParams,
    initial: TimeStepState,
    mut observe: impl FnMut(usize, &TimeStepState, &TimeStepState, &StepInfo) -> Result<()>,
) -> Result<TimeStepState> {
    params.validate()?;
    let mut state = initial;
    for k in 1..=params.n_steps() {
        let (next, info) = step_with(asm, params, &state, InitialGuess::Previous)
            .map_err(|e| Error::StepFailed { step: k, source: Box::new(e) })?;
        observe(k, &state, &next, &info)?;
        state = next;
    }
    Ok(state)
}

/// Runs the scheme and keeps every state, `t = 0` included.
pub fn trajectory(asm: &Assembler, params: &ModelParams, initial: TimeStepState) -> Result<Vec<TimeStepState>> {
    let mut states = vec![initial.clone()];
    run(asm, params, initial, |_, _, new, _| {
        states.push(new.clone());
        Ok(())
    })?;
    Ok(states)
}
