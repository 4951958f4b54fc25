//! Mass, energy, dissipation and production ledgers.
//!
//! Every quantity uses the assembly quadrature, so the discrete balance
//! identities hold up to the Newton tolerance.

use crate::assembly::Assembler;
use crate::chf_scheme::{psi_prime_av, psi_prime_quartic, psi_quartic, ModelParams, TimeStepState};
use crate::forchheimer::drag_weight;

/// `(phi, 1)`.
pub fn mass(asm: &Assembler, phi: &[f64]) -> f64 {
    asm.integrate(|t, q| asm.cg_value(phi, t, &q.l))
}

/// `|grad u|^2` for a CG1 coefficient vector.
pub fn grad_norm_sq(asm: &Assembler, u: &[f64]) -> f64 {
    (0..asm.n_cells())
        .map(|t| {
            let g = asm.cg_grad(u, t);
            asm.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// `E(phi) = eps2 / 2 |grad phi|^2 + (Psi(phi), 1)`.
pub fn energy(asm: &Assembler, phi: &[f64], eps2: f64) -> f64 {
    0.5 * eps2 * grad_norm_sq(asm, phi) + asm.integrate(|t, q| psi_quartic(asm.cg_value(phi, t, &q.l)))
}

/// `tau [(m(phi_old) grad mu, grad mu) + ((alpha + beta |v|^{s-1}) v, v)]`.
pub fn dissipation_increment(asm: &Assembler, params: &ModelParams, phi_old: &[f64], new: &TimeStepState) -> f64 {
    let mu = &new.mu.coeffs;
    let v = &new.v.coeffs;
    let d = asm.integrate(|t, q| {
        let f0 = asm.cg_value(phi_old, t, &q.l);
        let gm = asm.cg_grad(mu, t);
        let (vq, _) = asm.rt_value(v, t, q);
        let v2 = vq[0] * vq[0] + vq[1] * vq[1];
        (params.mobility)(f0) * (gm[0] * gm[0] + gm[1] * gm[1])
            + ((params.alpha)(f0) + (params.beta)(f0) * drag_weight(v2, params.s)) * v2
    });
    params.tau * d
}

/// `tau [(Gamma_phi(phi_old), mu) + (Gamma_v(phi_old), p) - gamma (phi_old mu, div v)]`.
pub fn production_increment(asm: &Assembler, params: &ModelParams, phi_old: &[f64], new: &TimeStepState) -> f64 {
    let (mu, v, p) = (&new.mu.coeffs, &new.v.coeffs, &new.p.coeffs);
    let pr = asm.integrate(|t, q| {
        let f0 = asm.cg_value(phi_old, t, &q.l);
        let muq = asm.cg_value(mu, t, &q.l);
        let (_, div) = asm.rt_value(v, t, q);
        (params.gamma_phi)(f0) * muq + (params.gamma_v)(f0) * asm.dg_value(p, t, &q.l)
            - params.gamma * f0 * muq * div
    });
    params.tau * pr
}

/// `gamma (phi_old, v.n)` over the boundary.
pub fn boundary_flux(asm: &Assembler, gamma: f64, phi_old: &[f64], v: &[f64]) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    gamma
        * asm.integrate_boundary(|t, bp| {
            let vl = asm.rt_local(v, t);
            let vn: f64 = (0..8).map(|k| vl[k] * bp.rvn[k]).sum();
            asm.cg_value(phi_old, t, &bp.l) * vn
        })
}

/// `E(phi1 | phi2) = eps2 / 2 |grad d|^2 + (Psi(phi1) - Psi(phi2) - Psi'(phi2) d, 1) + c / 2 |d|^2`
/// with `d = phi1 - phi2`.
pub fn relative_energy(asm: &Assembler, phi1: &[f64], phi2: &[f64], eps2: f64, c_tilde: f64) -> f64 {
    let d: Vec<f64> = phi1.iter().zip(phi2).map(|(a, b)| a - b).collect();
    0.5 * eps2 * grad_norm_sq(asm, &d)
        + asm.integrate(|t, q| {
            let a = asm.cg_value(phi1, t, &q.l);
            let b = asm.cg_value(phi2, t, &q.l);
            psi_quartic(a) - psi_quartic(b) - psi_prime_quartic(b) * (a - b) + 0.5 * c_tilde * (a - b) * (a - b)
        })
}

/// `|(Psi'_av, d_tau phi) - d_tau (Psi(phi), 1)|`.
pub fn chain_rule_defect(asm: &Assembler, phi_new: &[f64], phi_old: &[f64], tau: f64) -> f64 {
    let lhs = asm.integrate(|t, q| {
        let a = asm.cg_value(phi_new, t, &q.l);
        let b = asm.cg_value(phi_old, t, &q.l);
        psi_prime_av(a, b) * (a - b) / tau
    });
    let rhs = asm.integrate(|t, q| {
        psi_quartic(asm.cg_value(phi_new, t, &q.l)) - psi_quartic(asm.cg_value(phi_old, t, &q.l))
    }) / tau;
    (lhs - rhs).abs()
}

/// One row of the ledger, describing the step that ends at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub diss_inc: f64,
    pub prod_inc: f64,
    /// `(phi_new - phi_old, 1) - tau (Gamma_phi, 1) + tau * boundary_flux`.
    pub mass_defect: f64,
    /// `E(phi_new) - E(phi_old) + tau D - tau P`.
    pub energy_defect: f64,
    pub boundary_flux: f64,
}

impl BalanceRow {
    pub fn initial(asm: &Assembler, params: &ModelParams, state: &TimeStepState) -> Self {
        BalanceRow {
            t: state.t,
            mass: mass(asm, &state.phi.coeffs),
            energy: energy(asm, &state.phi.coeffs, params.eps2),
            diss_inc: 0.0,
            prod_inc: 0.0,
            mass_defect: 0.0,
            energy_defect: 0.0,
            boundary_flux: 0.0,
        }
    }

    pub fn for_step(asm: &Assembler, params: &ModelParams, old: &TimeStepState, new: &TimeStepState) -> Self {
        let phi0 = &old.phi.coeffs;
        let m0 = mass(asm, phi0);
        let m1 = mass(asm, &new.phi.coeffs);
        let e0 = energy(asm, phi0, params.eps2);
        let e1 = energy(asm, &new.phi.coeffs, params.eps2);
        let d = dissipation_increment(asm, params, phi0, new);
        let p = production_increment(asm, params, phi0, new);
        let flux = boundary_flux(asm, params.gamma, phi0, &new.v.coeffs);
        let src = asm.integrate(|t, q| (params.gamma_phi)(asm.cg_value(phi0, t, &q.l)));
        BalanceRow {
            t: new.t,
            mass: m1,
            energy: e1,
            diss_inc: d,
            prod_inc: p,
            mass_defect: m1 - m0 - params.tau * (src - flux),
            energy_defect: e1 - e0 + d - p,
            boundary_flux: flux,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    pub fn push(&mut self, row: BalanceRow) {
        self.rows.push(row);
    }

    /// `|sum of per-step mass defects|`.
    pub fn cumulative_mass_defect(&self) -> f64 {
        self.rows.iter().map(|r| r.mass_defect).sum::<f64>().abs()
    }

    /// Largest `energy_defect / max(1, |E|)`.
    pub fn max_scaled_energy_defect(&self) -> f64 {
        self.rows
            .iter()
            .skip(1)
            .map(|r| r.energy_defect / r.energy.abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest deviation of the mass column from its first entry.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.rows.first().map_or(0.0, |r| r.mass);
        self.rows.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
    }
}
