//! Residual and Jacobian of one time step of the coupled scheme.
//!
//! Unknowns are ordered `[phi | mu | v | p]`. The phase-field equation is
//! multiplied by `tau`, so its rows read
//!
//! ```text
//! (phi - phi_old, psi) - tau (phi_old v, grad psi) + tau gamma (phi_old v.n, psi)_dOmega
//!   + tau (m grad mu, grad psi) - tau (Gamma_phi, psi)
//! ```
//!
//! Summing these rows gives the mass-balance defect of the step.

use crate::assembly::{Assembler, QPoint};
use crate::chf_scheme::{psi_prime_av, psi_prime_av_dnew, ModelParams};
use crate::error::{Error, Result};
use crate::forchheimer::{drag_jacobian, drag_weight};
use crate::sparse::{AssemblyPattern, SparseMatrix};

/// Guard used for `|v|` inside the Jacobian only.
pub const JACOBIAN_DELTA: f64 = 1e-12;

/// Entries emitted per cell, in the fixed order of [`CellJacobian::emit`].
const CELL_ENTRIES: usize = 9 + 9 + 24 + 9 + 9 + 24 + 64 + 24 + 24;
const FACE_ENTRIES: usize = 24 + 24;

pub struct ChfSystem<'a> {
    asm: &'a Assembler,
    params: &'a ModelParams,
    phi0: &'a [f64],
    phi0_q: Vec<f64>,
    mob_q: Vec<f64>,
    alpha_q: Vec<f64>,
    beta_q: Vec<f64>,
    gphi_q: Vec<f64>,
    gv_q: Vec<f64>,
    /// Per cell: integral of the mobility (gradients are constant per cell).
    mob_int: Vec<f64>,
    phi0_b: Vec<f64>,
}

#[derive(Default)]
struct CellJacobian {
    j11: [[f64; 3]; 3],
    j12: [[f64; 3]; 3],
    j13: [[f64; 8]; 3],
    j21: [[f64; 3]; 3],
    j22: [[f64; 3]; 3],
    j32: [[f64; 3]; 8],
    j33: [[f64; 8]; 8],
    j34: [[f64; 3]; 8],
    j43: [[f64; 8]; 3],
}

impl<'a> ChfSystem<'a> {
    pub fn new(asm: &'a Assembler, params: &'a ModelParams, phi0: &'a [f64]) -> Result<Self> {
        if phi0.len() != asm.n_cg() {
            return Err(Error::DimensionMismatch(format!("phi_old of length {}", phi0.len())));
        }
        let nq = asm.n_cells() * asm.quad.tri_points.len();
        let mut s = ChfSystem {
            asm,
            params,
            phi0,
            phi0_q: Vec::with_capacity(nq),
            mob_q: Vec::with_capacity(nq),
            alpha_q: Vec::with_capacity(nq),
            beta_q: Vec::with_capacity(nq),
            gphi_q: Vec::with_capacity(nq),
            gv_q: Vec::with_capacity(nq),
            mob_int: Vec::with_capacity(asm.n_cells()),
            phi0_b: Vec::new(),
        };
        for t in 0..asm.n_cells() {
            let mut mi = 0.0;
            for q in asm.qpoints(t) {
                let f = asm.cg_value(phi0, t, &q.l);
                let m = (params.mobility)(f);
                mi += q.w * m;
                s.phi0_q.push(f);
                s.mob_q.push(m);
                s.alpha_q.push((params.alpha)(f));
                s.beta_q.push((params.beta)(f));
                s.gphi_q.push((params.gamma_phi)(f));
                s.gv_q.push((params.gamma_v)(f));
            }
            s.mob_int.push(mi);
        }
        for face in &asm.boundary {
            for bp in &face.points {
                s.phi0_b.push(asm.cg_value(phi0, face.triangle, &bp.l));
            }
        }
        Ok(s)
    }

    pub fn ndofs(&self) -> usize {
        2 * self.asm.n_cg() + self.asm.n_rt() + self.asm.n_dg()
    }

    pub fn phi_old(&self) -> &[f64] {
        self.phi0
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let nv = self.asm.n_cg();
        (nv, 2 * nv, 2 * nv + self.asm.n_rt())
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ndofs() {
            return Err(Error::DimensionMismatch(format!(
                "iterate of length {} for {} unknowns",
                x.len(),
                self.ndofs()
            )));
        }
        Ok(())
    }

    fn qidx(&self, t: usize, k: usize) -> usize {
        t * self.asm.quad.tri_points.len() + k
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let asm = self.asm;
        let p = self.params;
        let (tau, eps2, s, gamma) = (p.tau, p.eps2, p.s, p.gamma);
        let (o_mu, o_v, o_p) = self.offsets();
        let (phi, mu, v, pr) = (&x[..o_mu], &x[o_mu..o_v], &x[o_v..o_p], &x[o_p..]);
        let mut r = vec![0.0; x.len()];
        for t in 0..asm.n_cells() {
            let cg = asm.cg_dofs(t);
            let rt = asm.rt_dofs(t);
            let g = asm.grads(t);
            let phi1_l = asm.cg_local(phi, t);
            let mu_l = asm.cg_local(mu, t);
            let v_l = asm.rt_local(v, t);
            let p_l = asm.dg_local(pr, t);
            let gmu = asm.grad_local(&mu_l, t);
            let gphi = asm.grad_local(&phi1_l, t);
            let area = asm.area(t);
            let mut r1 = [0.0; 3];
            let mut r2 = [0.0; 3];
            let mut r3 = [0.0; 8];
            let mut r4 = [0.0; 3];
            for i in 0..3 {
                let gi = g[i];
                r1[i] += tau * self.mob_int[t] * (gmu[0] * gi[0] + gmu[1] * gi[1]);
                r2[i] -= eps2 * area * (gphi[0] * gi[0] + gphi[1] * gi[1]);
            }
            for (k, q) in asm.qpoints(t).iter().enumerate() {
                let qi = self.qidx(t, k);
                let f0 = self.phi0_q[qi];
                let f1 = dot3(&q.l, &phi1_l);
                let muq = dot3(&q.l, &mu_l);
                let pq = dot3(&q.l, &p_l);
                let (vq, divq) = local_velocity(q, &v_l);
                let w = q.w;
                let psi_av = psi_prime_av(f1, f0);
                for i in 0..3 {
                    let li = q.l[i];
                    let vg = vq[0] * g[i][0] + vq[1] * g[i][1];
                    r1[i] += w * ((f1 - f0) * li - tau * f0 * vg - tau * self.gphi_q[qi] * li);
                    r2[i] += w * (muq - psi_av) * li;
                    r4[i] += w * (divq - self.gv_q[qi]) * li;
                }
                let drag = self.alpha_q[qi] + self.beta_q[qi] * drag_weight(vq[0] * vq[0] + vq[1] * vq[1], s);
                for kk in 0..8 {
                    let rv = q.rv[kk];
                    r3[kk] += w
                        * (drag * (vq[0] * rv[0] + vq[1] * rv[1]) - pq * q.rd[kk]
                            + f0 * (gmu[0] * rv[0] + gmu[1] * rv[1])
                            + gamma * f0 * muq * q.rd[kk]);
                }
            }
            for i in 0..3 {
                r[cg[i]] += r1[i];
                r[o_mu + cg[i]] += r2[i];
                r[o_p + 3 * t + i] += r4[i];
            }
            for kk in 0..8 {
                r[o_v + rt[kk]] += r3[kk];
            }
        }
        if gamma != 0.0 {
            let mut bi = 0;
            for face in &asm.boundary {
                let t = face.triangle;
                let cg = asm.cg_dofs(t);
                let rt = asm.rt_dofs(t);
                let v_l = asm.rt_local(v, t);
                let mu_l = asm.cg_local(mu, t);
                for bp in &face.points {
                    let f0 = self.phi0_b[bi];
                    bi += 1;
                    let vn: f64 = (0..8).map(|k| v_l[k] * bp.rvn[k]).sum();
                    let muq = dot3(&bp.l, &mu_l);
                    for i in 0..3 {
                        r[cg[i]] += tau * gamma * bp.w * f0 * vn * bp.l[i];
                    }
                    for kk in 0..8 {
                        r[o_v + rt[kk]] -= gamma * bp.w * f0 * muq * bp.rvn[kk];
                    }
                }
            }
        }
        if let Some(index) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "residual", index });
        }
        Ok(r)
    }

    fn cell_jacobian(&self, x: &[f64], t: usize) -> CellJacobian {
        let asm = self.asm;
        let p = self.params;
        let (tau, eps2, s, gamma) = (p.tau, p.eps2, p.s, p.gamma);
        let (o_mu, o_v, _) = self.offsets();
        let g = asm.grads(t);
        let phi1_l = asm.cg_local(&x[..o_mu], t);
        let v_l = asm.rt_local(&x[o_v..], t);
        let area = asm.area(t);
        let mut j = CellJacobian::default();
        for i in 0..3 {
            for jj in 0..3 {
                let gg = g[i][0] * g[jj][0] + g[i][1] * g[jj][1];
                j.j12[i][jj] = tau * self.mob_int[t] * gg;
                j.j21[i][jj] = -eps2 * area * gg;
            }
        }
        for (k, q) in asm.qpoints(t).iter().enumerate() {
            let qi = self.qidx(t, k);
            let f0 = self.phi0_q[qi];
            let f1 = dot3(&q.l, &phi1_l);
            let w = q.w;
            let dpsi = psi_prime_av_dnew(f1, f0);
            for i in 0..3 {
                for jj in 0..3 {
                    let ll = w * q.l[i] * q.l[jj];
                    j.j11[i][jj] += ll;
                    j.j22[i][jj] += ll;
                    j.j21[i][jj] -= dpsi * ll;
                }
                for kk in 0..8 {
                    let rv = q.rv[kk];
                    j.j13[i][kk] -= w * tau * f0 * (rv[0] * g[i][0] + rv[1] * g[i][1]);
                    j.j43[i][kk] += w * q.rd[kk] * q.l[i];
                }
            }
            let (vq, _) = local_velocity(q, &v_l);
            let dn = drag_jacobian(vq, s, JACOBIAN_DELTA);
            let (a, b) = (self.alpha_q[qi], self.beta_q[qi]);
            for kk in 0..8 {
                let rk = q.rv[kk];
                for ll in 0..8 {
                    let rl = q.rv[ll];
                    let jr = [dn[0][0] * rl[0] + dn[0][1] * rl[1], dn[1][0] * rl[0] + dn[1][1] * rl[1]];
                    j.j33[kk][ll] += w * (a * (rk[0] * rl[0] + rk[1] * rl[1]) + b * (rk[0] * jr[0] + rk[1] * jr[1]));
                }
                for jj in 0..3 {
                    j.j34[kk][jj] -= w * q.l[jj] * q.rd[kk];
                    j.j32[kk][jj] += w
                        * (f0 * (g[jj][0] * rk[0] + g[jj][1] * rk[1]) + gamma * f0 * q.l[jj] * q.rd[kk]);
                }
            }
        }
        j
    }

    /// Writes cell `t`'s entries; `put(row, col, value)` is called exactly
    /// [`CELL_ENTRIES`] times in a fixed order.
    fn emit_cell(&self, t: usize, j: &CellJacobian, put: &mut impl FnMut(usize, usize, f64)) {
        let asm = self.asm;
        let (o_mu, o_v, o_p) = self.offsets();
        let cg = asm.cg_dofs(t);
        let rt = asm.rt_dofs(t);
        for i in 0..3 {
            for jj in 0..3 {
                put(cg[i], cg[jj], j.j11[i][jj]);
                put(cg[i], o_mu + cg[jj], j.j12[i][jj]);
            }
            for kk in 0..8 {
                put(cg[i], o_v + rt[kk], j.j13[i][kk]);
            }
            for jj in 0..3 {
                put(o_mu + cg[i], cg[jj], j.j21[i][jj]);
                put(o_mu + cg[i], o_mu + cg[jj], j.j22[i][jj]);
            }
        }
        for kk in 0..8 {
            for jj in 0..3 {
                put(o_v + rt[kk], o_mu + cg[jj], j.j32[kk][jj]);
            }
            for ll in 0..8 {
                put(o_v + rt[kk], o_v + rt[ll], j.j33[kk][ll]);
            }
            for jj in 0..3 {
                put(o_v + rt[kk], o_p + 3 * t + jj, j.j34[kk][jj]);
            }
        }
        for i in 0..3 {
            for kk in 0..8 {
                put(o_p + 3 * t + i, o_v + rt[kk], j.j43[i][kk]);
            }
        }
    }

    fn emit_boundary(&self, put: &mut impl FnMut(usize, usize, f64)) {
        let asm = self.asm;
        let (tau, gamma) = (self.params.tau, self.params.gamma);
        let (o_mu, o_v, _) = self.offsets();
        let mut bi = 0;
        for face in &asm.boundary {
            let t = face.triangle;
            let cg = asm.cg_dofs(t);
            let rt = asm.rt_dofs(t);
            let mut j13 = [[0.0; 8]; 3];
            let mut j32 = [[0.0; 3]; 8];
            for bp in &face.points {
                let f0 = self.phi0_b[bi];
                bi += 1;
                for i in 0..3 {
                    for kk in 0..8 {
                        let c = gamma * bp.w * f0 * bp.l[i] * bp.rvn[kk];
                        j13[i][kk] += tau * c;
                        j32[kk][i] -= c;
                    }
                }
            }
            for i in 0..3 {
                for kk in 0..8 {
                    put(cg[i], o_v + rt[kk], j13[i][kk]);
                }
            }
            for kk in 0..8 {
                for i in 0..3 {
                    put(o_v + rt[kk], o_mu + cg[i], j32[kk][i]);
                }
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix> {
        self.check_len(x)?;
        let asm = self.asm;
        let with_boundary = self.params.gamma != 0.0;
        let key = if with_boundary { "chf_gamma1" } else { "chf_gamma0" };
        let n = self.ndofs();
        let mut vals = Vec::with_capacity(
            asm.n_cells() * CELL_ENTRIES + if with_boundary { asm.boundary.len() * FACE_ENTRIES } else { 0 },
        );
        let pattern = asm.cached_pattern(key);
        let mut coords = Vec::new();
        {
            let record = pattern.is_none();
            let mut put = |r: usize, c: usize, v: f64| {
                if record {
                    coords.push((r, c));
                }
                vals.push(v);
            };
            for t in 0..asm.n_cells() {
                let cj = self.cell_jacobian(x, t);
                self.emit_cell(t, &cj, &mut put);
            }
            if with_boundary {
                self.emit_boundary(&mut put);
            }
        }
        let pattern = match pattern {
            Some(p) => p,
            None => asm.pattern(key, || AssemblyPattern::new(n, n, &coords)),
        };
        let m = pattern.assemble(&vals);
        if let Some(index) = m.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "jacobian", index });
        }
        Ok(m)
    }

    /// Sum of the phase-field rows: `(phi - phi_old, 1) - tau (Gamma_phi, 1)
    /// + tau gamma (phi_old, v.n)_dOmega` at the iterate `x`.
    pub fn mass_defect(&self, x: &[f64]) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(r[..self.asm.n_cg()].iter().sum())
    }
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn local_velocity(q: &QPoint, c: &[f64; 8]) -> ([f64; 2], f64) {
    let mut v = [0.0; 2];
    let mut d = 0.0;
    for k in 0..8 {
        v[0] += c[k] * q.rv[k][0];
        v[1] += c[k] * q.rv[k][1];
        d += c[k] * q.rd[k];
    }
    (v, d)
}
