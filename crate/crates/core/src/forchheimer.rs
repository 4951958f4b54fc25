//! Steady generalized Forchheimer problem in mixed form
//! `beta |v|^{s-1} v + alpha v + grad p = f`, `div v = g`, `p = h` on the boundary.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::assembly::forchheimer::ForchheimerSystem;
use crate::assembly::{Assembler, Form};
use crate::error::{Error, Result};
use crate::fe::FeField;
use crate::linalg::{newton_solve, NewtonConfig, NewtonOutcome, SparseLu};
use crate::mesh::Point;

/// `|v|^{s-1}` from `|v|^2`, with `|0|^{s-1} = 0` for `s > 1` and the Darcy
/// convention `|v|^0 = 1` for `s = 1`.
#[inline]
pub fn drag_weight(v2: f64, s: f64) -> f64 {
    if s == 1.0 {
        1.0
    } else if s == 2.0 {
        v2.sqrt()
    } else if s == 3.0 {
        v2
    } else if v2 == 0.0 {
        0.0
    } else {
        v2.powf(0.5 * (s - 1.0))
    }
}

/// Jacobian of `v -> |v|^{s-1} v` with `|v|` replaced by `sqrt(|v|^2 + delta^2)`.
#[inline]
pub fn drag_jacobian(v: [f64; 2], s: f64, delta: f64) -> [[f64; 2]; 2] {
    if s == 1.0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    let r2 = v[0] * v[0] + v[1] * v[1] + delta * delta;
    let a = r2.powf(0.5 * (s - 1.0));
    let b = (s - 1.0) * r2.powf(0.5 * (s - 3.0));
    [
        [a + b * v[0] * v[0], b * v[0] * v[1]],
        [b * v[1] * v[0], a + b * v[1] * v[1]],
    ]
}

/// `|x|^{s-1} x`.
pub fn forchheimer_nonlinearity(x: [f64; 2], s: f64) -> [f64; 2] {
    let w = drag_weight(x[0] * x[0] + x[1] * x[1], s);
    [w * x[0], w * x[1]]
}

fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

fn sub(x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    [x[0] - y[0], x[1] - y[1]]
}

/// `|x|^e x` for a possibly negative exponent `e`, zero at the origin.
fn signed_pow(x: [f64; 2], e: f64) -> [f64; 2] {
    let r = norm(x);
    if r == 0.0 {
        [0.0, 0.0]
    } else {
        let w = r.powf(e);
        [w * x[0], w * x[1]]
    }
}

/// Slack `rhs - lhs` of each of the four inequalities together with the
/// magnitude it should be compared against.
#[derive(Debug, Clone, Copy)]
pub struct InequalitySlacks {
    pub slack: [f64; 4],
    pub scale: [f64; 4],
}

impl InequalitySlacks {
    /// True when every slack is at least `-tol * scale`.
    pub fn holds(&self, tol: f64) -> bool {
        (0..4).all(|i| self.slack[i] >= -tol * self.scale[i])
    }
}

/// Evaluates, for `s > 1`,
/// 1. `||x|^{s-1}x - |y|^{s-1}y| <= s 2^{s-1} (|x|^{s-1} + |y|^{s-1}) |x - y|`
/// 2. `(|x|^{s-1}x - |y|^{s-1}y).(x - y) >= 2^{1-s} |x - y|^{s+1}`
/// 3. `||x|^{(1-s)/s}x - |y|^{(1-s)/s}y| <= 2^{1-1/s} |x - y|^{1/s}`
/// 4. `|x - y|^2 / (|x|^{1-1/s} + |y|^{1-1/s}) <= s (x/|x|^{1-1/s} - y/|y|^{1-1/s}).(x - y)`
///
/// with `0/0 = 0`.
pub fn check_inequalities(x: [f64; 2], y: [f64; 2], s: f64) -> InequalitySlacks {
    let d = sub(x, y);
    let nd = norm(d);
    let (nx, ny) = (norm(x), norm(y));
    let fx = forchheimer_nonlinearity(x, s);
    let fy = forchheimer_nonlinearity(y, s);

    let l1 = norm(sub(fx, fy));
    let r1 = s * 2f64.powf(s - 1.0) * (nx.powf(s - 1.0) + ny.powf(s - 1.0)) * nd;

    let df = sub(fx, fy);
    let l2 = df[0] * d[0] + df[1] * d[1];
    let r2 = 2f64.powf(1.0 - s) * nd.powf(s + 1.0);

    let e = (1.0 - s) / s;
    let l3 = norm(sub(signed_pow(x, e), signed_pow(y, e)));
    let r3 = 2f64.powf(1.0 - 1.0 / s) * nd.powf(1.0 / s);

    let den = nx.powf(1.0 - 1.0 / s) + ny.powf(1.0 - 1.0 / s);
    let l4 = if den == 0.0 { 0.0 } else { nd * nd / den };
    let g = sub(signed_pow(x, 1.0 / s - 1.0), signed_pow(y, 1.0 / s - 1.0));
    let r4 = s * (g[0] * d[0] + g[1] * d[1]);

    let sc = |a: f64, b: f64| a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    InequalitySlacks {
        slack: [r1 - l1, l2 - r2, r3 - l3, r4 - l4],
        scale: [sc(l1, r1), sc(l2, r2), sc(l3, r3), sc(l4, r4)],
    }
}

pub type PointFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub struct ForchheimerProblem {
    pub s: f64,
    pub alpha: PointFn,
    pub beta: PointFn,
    pub f: VectorFn,
    pub g: PointFn,
    /// Pressure boundary datum.
    pub h: PointFn,
}

impl ForchheimerProblem {
    /// Constant coefficients, homogeneous data.
    pub fn homogeneous(s: f64, alpha: f64, beta: f64) -> Self {
        ForchheimerProblem {
            s,
            alpha: Arc::new(move |_| alpha),
            beta: Arc::new(move |_| beta),
            f: Arc::new(|_| [0.0, 0.0]),
            g: Arc::new(|_| 0.0),
            h: Arc::new(|_| 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!("Forchheimer exponent s = {} must exceed 1", self.s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForchheimerSolution {
    pub v: FeField,
    pub p: FeField,
    pub newton: NewtonOutcome,
}

/// Newton solve of the discrete mixed problem, optionally regularized with
/// `d_n` and `c_n`. `x0` is the starting iterate `[v | p]` (zero if `None`).
pub fn solve_forchheimer(
    asm: &Assembler,
    problem: &ForchheimerProblem,
    n_reg: Option<f64>,
    x0: Option<Vec<f64>>,
    cfg: &NewtonConfig,
) -> Result<ForchheimerSolution> {
    let sys = ForchheimerSystem::new(asm, problem, n_reg)?;
    let x0 = x0.unwrap_or_else(|| vec![0.0; sys.ndofs()]);
    if x0.len() != sys.ndofs() {
        return Err(Error::DimensionMismatch(format!("initial iterate of length {}", x0.len())));
    }
    let out = newton_solve(|x| sys.residual(x), |x| sys.jacobian(x), x0, cfg)?;
    let nr = asm.n_rt();
    Ok(ForchheimerSolution {
        v: FeField::from_coeffs(&asm.rt, out.x[..nr].to_vec())?,
        p: FeField::from_coeffs(&asm.dg, out.x[nr..].to_vec())?,
        newton: out,
    })
}

/// Discrete inf-sup witness `min_q sup_v (div v, q) / (|q|_L2 |v|_Hdiv)`,
/// the square root of the smallest eigenvalue of `B X^{-1} B^T q = lambda M q`
/// with `X` the H(div) Gram matrix and `M` the DG1 mass matrix. Dense in the
/// pressure space, intended for small meshes.
pub fn inf_sup_witness(asm: &Assembler) -> Result<f64> {
    let nr = asm.n_rt();
    let nq = asm.n_dg();
    let mass = asm.assemble(Form::RtMass);
    let dd = asm.assemble(Form::DivDiv);
    let mut tb = crate::sparse::TripletBuilder::with_capacity(nr, nr, mass.nnz() + dd.nnz());
    tb.push_block(&mass, 0, 0, 1.0);
    tb.push_block(&dd, 0, 0, 1.0);
    let x = tb.build();
    let b = asm.divergence();
    let bt = b.transpose();
    let mut lu = SparseLu::new();
    lu.factor(&x)?;
    // S = B X^{-1} B^T, column by column
    let mut s = DMatrix::<f64>::zeros(nq, nq);
    let mut col = vec![0.0; nq];
    for j in 0..nq {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        let btj = bt.mul_vec(&col);
        let y = lu.solve(&btj)?;
        let sj = b.mul_vec(&y);
        for i in 0..nq {
            s[(i, j)] = sj[i];
        }
    }
    // M^{-1/2} is block diagonal with 3x3 blocks
    let m = asm.dg_mass();
    let mut minv_half = DMatrix::<f64>::zeros(nq, nq);
    for t in 0..asm.n_cells() {
        let blk = nalgebra::Matrix3::from_fn(|i, j| m.get(3 * t + i, 3 * t + j));
        let eig = SymmetricEigen::new(blk);
        let d = nalgebra::Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let r = eig.eigenvectors * d * eig.eigenvectors.transpose();
        for i in 0..3 {
            for j in 0..3 {
                minv_half[(3 * t + i, 3 * t + j)] = r[(i, j)];
            }
        }
    }
    let mut k = &minv_half * s * &minv_half;
    k = (&k + k.transpose()) * 0.5;
    let lambda = SymmetricEigen::new(k).eigenvalues.min();
    Ok(lambda.max(0.0).sqrt())
}
