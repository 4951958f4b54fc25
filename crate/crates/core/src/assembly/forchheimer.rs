//! Residual and Jacobian of the steady mixed Forchheimer problem, unknowns
//! `[v | p]`, optionally with the regularizing forms `d_n` and `c_n`.

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::forchheimer::{drag_jacobian, drag_weight, ForchheimerProblem};
use crate::sparse::{AssemblyPattern, SparseMatrix};

/// Guard for `|v|` in the Jacobian and for `|p|` in `c_n`.
pub const DELTA: f64 = 1e-12;

pub struct ForchheimerSystem<'a> {
    asm: &'a Assembler,
    s: f64,
    /// `1 / n` of the regularization, zero when absent.
    inv_n: f64,
    alpha_q: Vec<f64>,
    beta_q: Vec<f64>,
    /// `(f, w) - (h, w.n)_dOmega`.
    load_v: Vec<f64>,
    /// `(g, q)`.
    load_p: Vec<f64>,
}

impl<'a> ForchheimerSystem<'a> {
    pub fn new(asm: &'a Assembler, problem: &ForchheimerProblem, n_reg: Option<f64>) -> Result<Self> {
        problem.validate()?;
        let inv_n = match n_reg {
            None => 0.0,
            Some(n) if n > 0.0 && n.is_finite() => 1.0 / n,
            Some(n) => return Err(Error::InvalidParameter(format!("regularization n = {n} must be positive"))),
        };
        let mut alpha_q = Vec::new();
        let mut beta_q = Vec::new();
        for t in 0..asm.n_cells() {
            for q in asm.qpoints(t) {
                let (a, b) = ((problem.alpha)(q.x), (problem.beta)(q.x));
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::InvalidParameter(format!("alpha = {a}, beta = {b} at {:?}", q.x)));
                }
                alpha_q.push(a);
                beta_q.push(b);
            }
        }
        let mut load_v = asm.rt_load(|_, q| (problem.f)(q.x));
        for (l, b) in load_v.iter_mut().zip(asm.rt_boundary_load(|x| (problem.h)(x))) {
            *l -= b;
        }
        let load_p = asm.dg_load(|_, q| (problem.g)(q.x));
        Ok(ForchheimerSystem { asm, s: problem.s, inv_n, alpha_q, beta_q, load_v, load_p })
    }

    pub fn ndofs(&self) -> usize {
        self.asm.n_rt() + self.asm.n_dg()
    }

    fn nq(&self) -> usize {
        self.asm.quad.tri_points.len()
    }

    /// `(p^2 + delta^2)^((1 - s) / (2 s)) p` and its derivative.
    fn c_term(&self, p: f64) -> (f64, f64) {
        let e = (1.0 - self.s) / (2.0 * self.s);
        let r = p * p + DELTA * DELTA;
        let re = r.powf(e);
        (re * p, re + 2.0 * e * p * p * re / r)
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ndofs() {
            return Err(Error::DimensionMismatch(format!("iterate of length {}", x.len())));
        }
        let asm = self.asm;
        let nr = asm.n_rt();
        let (v, pr) = x.split_at(nr);
        let mut r = vec![0.0; x.len()];
        for (ri, li) in r[..nr].iter_mut().zip(&self.load_v) {
            *ri = -li;
        }
        for (ri, li) in r[nr..].iter_mut().zip(&self.load_p) {
            *ri = -li;
        }
        for t in 0..asm.n_cells() {
            let rt = asm.rt_dofs(t);
            let v_l = asm.rt_local(v, t);
            let p_l = asm.dg_local(pr, t);
            for (k, q) in asm.qpoints(t).iter().enumerate() {
                let qi = t * self.nq() + k;
                let mut vq = [0.0; 2];
                let mut div = 0.0;
                for kk in 0..8 {
                    vq[0] += v_l[kk] * q.rv[kk][0];
                    vq[1] += v_l[kk] * q.rv[kk][1];
                    div += v_l[kk] * q.rd[kk];
                }
                let pq = q.l[0] * p_l[0] + q.l[1] * p_l[1] + q.l[2] * p_l[2];
                let drag = self.alpha_q[qi] + self.beta_q[qi] * drag_weight(vq[0] * vq[0] + vq[1] * vq[1], self.s);
                let dn = self.inv_n * drag_weight(div * div, self.s) * div;
                for kk in 0..8 {
                    let rv = q.rv[kk];
                    r[rt[kk]] += q.w * (drag * (vq[0] * rv[0] + vq[1] * rv[1]) - pq * q.rd[kk] + dn * q.rd[kk]);
                }
                let cn = if self.inv_n > 0.0 { self.inv_n * self.c_term(pq).0 } else { 0.0 };
                for i in 0..3 {
                    r[nr + 3 * t + i] += q.w * (div + cn) * q.l[i];
                }
            }
        }
        if let Some(index) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "residual", index });
        }
        Ok(r)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix> {
        if x.len() != self.ndofs() {
            return Err(Error::DimensionMismatch(format!("iterate of length {}", x.len())));
        }
        let asm = self.asm;
        let nr = asm.n_rt();
        let (v, pr) = x.split_at(nr);
        let key = "forchheimer";
        let pattern = asm.cached_pattern(key);
        let record = pattern.is_none();
        let mut coords = Vec::new();
        let mut vals = Vec::with_capacity(asm.n_cells() * (64 + 24 + 24 + 9));
        for t in 0..asm.n_cells() {
            let rt = asm.rt_dofs(t);
            let v_l = asm.rt_local(v, t);
            let p_l = asm.dg_local(pr, t);
            let mut jvv = [[0.0; 8]; 8];
            let mut jvp = [[0.0; 3]; 8];
            let mut jpv = [[0.0; 8]; 3];
            let mut jpp = [[0.0; 3]; 3];
            for (k, q) in asm.qpoints(t).iter().enumerate() {
                let qi = t * self.nq() + k;
                let mut vq = [0.0; 2];
                let mut div = 0.0;
                for kk in 0..8 {
                    vq[0] += v_l[kk] * q.rv[kk][0];
                    vq[1] += v_l[kk] * q.rv[kk][1];
                    div += v_l[kk] * q.rd[kk];
                }
                let pq = q.l[0] * p_l[0] + q.l[1] * p_l[1] + q.l[2] * p_l[2];
                let dn = drag_jacobian(vq, self.s, DELTA);
                let (a, b) = (self.alpha_q[qi], self.beta_q[qi]);
                // d/dd [|d|^{s-1} d] = s |d|^{s-1}
                let ddiv = self.inv_n * self.s * drag_weight(div * div, self.s);
                for kk in 0..8 {
                    let rk = q.rv[kk];
                    for ll in 0..8 {
                        let rl = q.rv[ll];
                        let jr = [dn[0][0] * rl[0] + dn[0][1] * rl[1], dn[1][0] * rl[0] + dn[1][1] * rl[1]];
                        jvv[kk][ll] += q.w
                            * (a * (rk[0] * rl[0] + rk[1] * rl[1])
                                + b * (rk[0] * jr[0] + rk[1] * jr[1])
                                + ddiv * q.rd[kk] * q.rd[ll]);
                    }
                    for j in 0..3 {
                        jvp[kk][j] -= q.w * q.l[j] * q.rd[kk];
                        jpv[j][kk] += q.w * q.l[j] * q.rd[kk];
                    }
                }
                if self.inv_n > 0.0 {
                    let dc = self.inv_n * self.c_term(pq).1;
                    for i in 0..3 {
                        for j in 0..3 {
                            jpp[i][j] += q.w * dc * q.l[i] * q.l[j];
                        }
                    }
                }
            }
            let mut put = |r: usize, c: usize, v: f64| {
                if record {
                    coords.push((r, c));
                }
                vals.push(v);
            };
            for kk in 0..8 {
                for ll in 0..8 {
                    put(rt[kk], rt[ll], jvv[kk][ll]);
                }
                for j in 0..3 {
                    put(rt[kk], nr + 3 * t + j, jvp[kk][j]);
                }
            }
            for i in 0..3 {
                for kk in 0..8 {
                    put(nr + 3 * t + i, rt[kk], jpv[i][kk]);
                }
                for j in 0..3 {
                    put(nr + 3 * t + i, nr + 3 * t + j, jpp[i][j]);
                }
            }
        }
        let n = self.ndofs();
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
}
