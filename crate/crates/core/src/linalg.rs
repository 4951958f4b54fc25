//! Sparse direct solves and a damped Newton driver.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;
use std::panic::AssertUnwindSafe;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// LU factorization that keeps its symbolic analysis and reuses it whenever
/// the next matrix has the same sparsity pattern.
#[derive(Default)]
pub struct SparseLu {
    pattern: Option<(Vec<usize>, Vec<usize>)>,
    symbolic: Option<SymbolicLu<usize>>,
    numeric: Option<Lu<usize, f64>>,
    matrix: Option<SparseMatrix>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, a: &SparseMatrix) -> Result<()> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "lu of {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        a.check_finite()?;
        let sym = SymbolicSparseColMatRef::new_checked(a.nrows(), a.ncols(), a.col_ptr(), None, a.row_idx());
        let same = self
            .pattern
            .as_ref()
            .is_some_and(|(cp, ri)| cp == a.col_ptr() && ri == a.row_idx());
        if !same || self.symbolic.is_none() {
            let s = SymbolicLu::try_new(sym).map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
            self.symbolic = Some(s);
            self.pattern = Some((a.col_ptr().to_vec(), a.row_idx().to_vec()));
        }
        let mat = SparseColMatRef::new(sym, a.values());
        let symbolic = self.symbolic.clone().unwrap();
        // faer panics on an exactly zero numeric pivot
        let lu = std::panic::catch_unwind(AssertUnwindSafe(|| Lu::try_new_with_symbolic(symbolic, mat)))
            .map_err(|_| zero_pivot(a))?
            .map_err(|e| match e {
                LuError::SymbolicSingular { index } => Error::SingularPivot { row: index },
                LuError::Generic(g) => Error::LinearSolver(format!("{g:?}")),
            })?;
        self.numeric = Some(lu);
        self.matrix = Some(a.clone());
        Ok(())
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let n = x.len();
        let lu = self.numeric.as_ref().expect("factor before solve");
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    /// Solves with the last factored matrix, refining once if the residual
    /// exceeds `1e-10 max(1, |b|)`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let a = self.matrix.as_ref().ok_or_else(|| Error::LinearSolver("no factorization".into()))?;
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch(format!("rhs length {} for n = {}", b.len(), a.nrows())));
        }
        let mut x = self.raw_solve(b);
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularPivot { row });
        }
        let bound = 1e-10 * inf_norm(b).max(1.0);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        if inf_norm(&r) > bound {
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            if let Some(row) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::SingularPivot { row });
            }
        }
        Ok(x)
    }

    /// `|Ax - b|_inf` for the factored matrix.
    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let a = self.matrix.as_ref().expect("factor before residual");
        a.mul_vec(x).iter().zip(b).fold(0.0, |m, (ax, bi)| m.max((ax - bi).abs()))
    }
}

/// Locates the first vanishing pivot with a dense factorization; only used
/// after the sparse factorization has already failed.
fn zero_pivot(a: &SparseMatrix) -> Error {
    let n = a.nrows();
    if n > 3000 {
        return Error::LinearSolver(format!("zero pivot in {n}x{n} matrix"));
    }
    let mut d = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in a.iter() {
        d[(r, c)] = v;
    }
    let lu = d.lu();
    let u = lu.u();
    let scale = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let row = (0..n).find(|&i| u[(i, i)].abs() <= 1e-14 * scale).unwrap_or(n.saturating_sub(1));
    Error::SingularPivot { row }
}

pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut lu = SparseLu::new();
    lu.factor(a)?;
    lu.solve(b)
}

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Absolute tolerance on the residual max-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried before a step is taken regardless.
    pub min_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-11, max_iter: 50, min_step: 1.0 / 256.0 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    /// Residual max-norm before the first iteration and after each one.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Damped Newton iteration. The step is halved while the residual norm does
/// not decrease, down to `cfg.min_step`.
pub fn newton_solve<R, J>(mut residual: R, mut jacobian: J, x0: Vec<f64>, cfg: &NewtonConfig) -> Result<NewtonOutcome>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<SparseMatrix>,
{
    cfg.validate()?;
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut norm = inf_norm(&r);
    let mut trace = vec![norm];
    let mut lu = SparseLu::new();
    let mut iterations = 0;
    while norm > cfg.tol {
        if iterations == cfg.max_iter || !norm.is_finite() {
            return Err(Error::NewtonDiverged { iterations, last_residual: norm, trace });
        }
        let jac = jacobian(&x)?;
        lu.factor(&jac)?;
        let dx = lu.solve(&r)?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, d)| xi - lambda * d).collect();
            let rt = residual(&trial)?;
            let nt = inf_norm(&rt);
            if nt < norm || nt <= cfg.tol || lambda <= cfg.min_step {
                x = trial;
                r = rt;
                norm = nt;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        trace.push(norm);
    }
    Ok(NewtonOutcome { x, trace, iterations })
}
