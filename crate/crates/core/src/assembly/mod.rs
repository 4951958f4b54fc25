//! Element loops over cached quadrature data.
//!
//! [`Assembler`] evaluates every basis function once per quadrature point and
//! keeps the values for the lifetime of the mesh, so residual and Jacobian
//! evaluations inside Newton only touch coefficient data.

pub mod chf;
pub mod forchheimer;

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fe::{bary_gradients, bary_to_point, FeSpace};
use crate::mesh::{Mesh, Point};
use crate::quadrature::QuadratureRule;
use crate::sparse::{AssemblyPattern, SparseMatrix, TripletBuilder};

/// Volume quadrature point with the globally oriented RT1 basis evaluated.
#[derive(Debug, Clone)]
pub struct QPoint {
    /// Quadrature weight times cell area.
    pub w: f64,
    pub l: [f64; 3],
    pub x: Point,
    pub rv: [[f64; 2]; 8],
    pub rd: [f64; 8],
}

/// Quadrature point on a boundary edge.
#[derive(Debug, Clone)]
pub struct BPoint {
    /// Quadrature weight times edge length.
    pub w: f64,
    pub l: [f64; 3],
    pub x: Point,
    /// Normal components `V_k . n` of the RT1 basis of the adjacent cell.
    pub rvn: [f64; 8],
}

#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub triangle: usize,
    pub normal: Point,
    pub points: Vec<BPoint>,
}

/// Named bilinear forms with no coefficient dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    CgMass,
    CgStiffness,
    RtMass,
    DivDiv,
    /// `(div u, q)` with DG1 rows and RT1 columns.
    Divergence,
    DgMass,
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cg_mass" => Form::CgMass,
            "cg_stiffness" => Form::CgStiffness,
            "rt_mass" => Form::RtMass,
            "div_div" => Form::DivDiv,
            "divergence" => Form::Divergence,
            "dg_mass" => Form::DgMass,
            _ => return Err(Error::InvalidParameter(format!("unknown form '{s}'"))),
        })
    }
}

pub struct Assembler {
    pub mesh: Arc<Mesh>,
    pub cg: FeSpace,
    pub rt: FeSpace,
    pub dg: FeSpace,
    pub quad: QuadratureRule,
    nq: usize,
    qp: Vec<QPoint>,
    grads: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
    rt_idx: Vec<[usize; 8]>,
    pub boundary: Vec<BoundaryFace>,
    patterns: Mutex<HashMap<&'static str, Arc<AssemblyPattern>>>,
}

impl Assembler {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        let quad = QuadratureRule::degree6();
        let cg = FeSpace::cg1(mesh.clone());
        let rt = FeSpace::rt1(mesh.clone())?;
        let dg = FeSpace::dg1(mesh.clone());
        let nt = mesh.n_triangles();
        let nq = quad.tri_points.len();
        let mut qp = Vec::with_capacity(nt * nq);
        let mut grads = Vec::with_capacity(nt);
        let mut areas = Vec::with_capacity(nt);
        let mut rt_idx = Vec::with_capacity(nt);
        for t in 0..nt {
            let pts = mesh.triangle_points(t);
            let area = mesh.triangle_area(t);
            for (l, &w) in quad.tri_points.iter().zip(&quad.tri_weights) {
                let x = bary_to_point(&pts, l);
                let (rv, rd) = rt.rt_values(t, x);
                qp.push(QPoint { w: w * area, l: *l, x, rv, rd });
            }
            grads.push(bary_gradients(&mesh, t));
            areas.push(area);
            rt_idx.push(rt.cell_dofs(t).idx);
        }
        let mut boundary = Vec::with_capacity(mesh.boundary_edges.len());
        for be in &mesh.boundary_edges {
            let len = mesh.edge_length(be.edge);
            let points = quad
                .edge_points
                .iter()
                .zip(&quad.edge_weights)
                .map(|(&s, &w)| {
                    let x = mesh.edge_point(be.edge, s);
                    let (rv, _) = rt.rt_values(be.triangle, x);
                    let mut rvn = [0.0; 8];
                    for k in 0..8 {
                        rvn[k] = rv[k][0] * be.normal[0] + rv[k][1] * be.normal[1];
                    }
                    BPoint { w: w * len, l: mesh.barycentric(be.triangle, x), x, rvn }
                })
                .collect();
            boundary.push(BoundaryFace { triangle: be.triangle, normal: be.normal, points });
        }
        Ok(Assembler {
            mesh,
            cg,
            rt,
            dg,
            quad,
            nq,
            qp,
            grads,
            areas,
            rt_idx,
            boundary,
            patterns: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.areas.len()
    }

    pub fn n_cg(&self) -> usize {
        self.cg.ndofs()
    }

    pub fn n_rt(&self) -> usize {
        self.rt.ndofs()
    }

    pub fn n_dg(&self) -> usize {
        self.dg.ndofs()
    }

    pub fn qpoints(&self, t: usize) -> &[QPoint] {
        &self.qp[t * self.nq..(t + 1) * self.nq]
    }

    pub fn grads(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.grads[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn cg_dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangles[t]
    }

    pub fn rt_dofs(&self, t: usize) -> &[usize; 8] {
        &self.rt_idx[t]
    }

    pub fn dg_dofs(&self, t: usize) -> [usize; 3] {
        [3 * t, 3 * t + 1, 3 * t + 2]
    }

    /// Cached sparsity pattern for a named element loop, built on first use.
    pub(crate) fn pattern(
        &self,
        key: &'static str,
        build: impl FnOnce() -> AssemblyPattern,
    ) -> Arc<AssemblyPattern> {
        let mut map = self.patterns.lock().expect("pattern cache poisoned");
        map.entry(key).or_insert_with(|| Arc::new(build())).clone()
    }

    pub(crate) fn cached_pattern(&self, key: &'static str) -> Option<Arc<AssemblyPattern>> {
        self.patterns.lock().expect("pattern cache poisoned").get(key).cloned()
    }

    // ---- local evaluation ----

    pub fn cg_local(&self, c: &[f64], t: usize) -> [f64; 3] {
        let d = self.cg_dofs(t);
        [c[d[0]], c[d[1]], c[d[2]]]
    }

    pub fn dg_local(&self, c: &[f64], t: usize) -> [f64; 3] {
        [c[3 * t], c[3 * t + 1], c[3 * t + 2]]
    }

    pub fn rt_local(&self, c: &[f64], t: usize) -> [f64; 8] {
        let d = &self.rt_idx[t];
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = c[d[k]];
        }
        out
    }

    pub fn grad_local(&self, loc: &[f64; 3], t: usize) -> [f64; 2] {
        let g = &self.grads[t];
        [
            loc[0] * g[0][0] + loc[1] * g[1][0] + loc[2] * g[2][0],
            loc[0] * g[0][1] + loc[1] * g[1][1] + loc[2] * g[2][1],
        ]
    }

    pub fn assemble(&self, form: Form) -> SparseMatrix {
        match form {
            Form::CgMass => self.cg_mass_weighted(|_, _| 1.0),
            Form::CgStiffness => self.cg_stiffness_weighted(|_, _| 1.0),
            Form::RtMass => self.rt_mass_weighted(|_, _| 1.0),
            Form::DivDiv => self.rt_divdiv(),
            Form::Divergence => self.divergence(),
            Form::DgMass => self.dg_mass(),
        }
    }

    /// `(w psi_j, psi_i)` on CG1.
    pub fn cg_mass_weighted(&self, w: impl Fn(usize, &QPoint) -> f64) -> SparseMatrix {
        let n = self.n_cg();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * self.n_cells());
        for t in 0..self.n_cells() {
            let d = self.cg_dofs(t);
            let mut loc = [[0.0; 3]; 3];
            for q in self.qpoints(t) {
                let c = q.w * w(t, q);
                for i in 0..3 {
                    for j in 0..3 {
                        loc[i][j] += c * q.l[i] * q.l[j];
                    }
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    b.push(d[i], d[j], loc[i][j]);
                }
            }
        }
        b.build()
    }

    /// `(w grad psi_j, grad psi_i)` on CG1.
    pub fn cg_stiffness_weighted(&self, w: impl Fn(usize, &QPoint) -> f64) -> SparseMatrix {
        let n = self.n_cg();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * self.n_cells());
        for t in 0..self.n_cells() {
            let d = self.cg_dofs(t);
            let g = &self.grads[t];
            let c: f64 = self.qpoints(t).iter().map(|q| q.w * w(t, q)).sum();
            for i in 0..3 {
                for j in 0..3 {
                    b.push(d[i], d[j], c * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
                }
            }
        }
        b.build()
    }

    /// `(w V_l, V_k)` on RT1.
    pub fn rt_mass_weighted(&self, w: impl Fn(usize, &QPoint) -> f64) -> SparseMatrix {
        let n = self.n_rt();
        let mut b = TripletBuilder::with_capacity(n, n, 64 * self.n_cells());
        for t in 0..self.n_cells() {
            let d = &self.rt_idx[t];
            let mut loc = [[0.0; 8]; 8];
            for q in self.qpoints(t) {
                let c = q.w * w(t, q);
                for k in 0..8 {
                    for l in 0..8 {
                        loc[k][l] += c * (q.rv[k][0] * q.rv[l][0] + q.rv[k][1] * q.rv[l][1]);
                    }
                }
            }
            for k in 0..8 {
                for l in 0..8 {
                    b.push(d[k], d[l], loc[k][l]);
                }
            }
        }
        b.build()
    }

    /// `(div V_l, div V_k)` on RT1.
    pub fn rt_divdiv(&self) -> SparseMatrix {
        let n = self.n_rt();
        let mut b = TripletBuilder::with_capacity(n, n, 64 * self.n_cells());
        for t in 0..self.n_cells() {
            let d = &self.rt_idx[t];
            let mut loc = [[0.0; 8]; 8];
            for q in self.qpoints(t) {
                for k in 0..8 {
                    for l in 0..8 {
                        loc[k][l] += q.w * q.rd[k] * q.rd[l];
                    }
                }
            }
            for k in 0..8 {
                for l in 0..8 {
                    b.push(d[k], d[l], loc[k][l]);
                }
            }
        }
        b.build()
    }

    /// `B_ik = (div V_k, q_i)`, DG1 rows by RT1 columns.
    pub fn divergence(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.n_dg(), self.n_rt(), 24 * self.n_cells());
        for t in 0..self.n_cells() {
            let d = &self.rt_idx[t];
            let mut loc = [[0.0; 8]; 3];
            for q in self.qpoints(t) {
                for i in 0..3 {
                    for k in 0..8 {
                        loc[i][k] += q.w * q.l[i] * q.rd[k];
                    }
                }
            }
            for i in 0..3 {
                for k in 0..8 {
                    b.push(3 * t + i, d[k], loc[i][k]);
                }
            }
        }
        b.build()
    }

    pub fn dg_mass(&self) -> SparseMatrix {
        let n = self.n_dg();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * self.n_cells());
        for t in 0..self.n_cells() {
            let a = self.areas[t];
            for i in 0..3 {
                for j in 0..3 {
                    // exact P1 mass: |K| (1 + delta_ij) / 12
                    let v = if i == j { a / 6.0 } else { a / 12.0 };
                    b.push(3 * t + i, 3 * t + j, v);
                }
            }
        }
        b.build()
    }

    /// `(f, psi_i)` on CG1.
    pub fn cg_load(&self, f: impl Fn(usize, &QPoint) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cg()];
        for t in 0..self.n_cells() {
            let d = self.cg_dofs(t);
            for q in self.qpoints(t) {
                let v = q.w * f(t, q);
                for i in 0..3 {
                    out[d[i]] += v * q.l[i];
                }
            }
        }
        out
    }

    /// `(f, q_i)` on DG1.
    pub fn dg_load(&self, f: impl Fn(usize, &QPoint) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dg()];
        for t in 0..self.n_cells() {
            for q in self.qpoints(t) {
                let v = q.w * f(t, q);
                for i in 0..3 {
                    out[3 * t + i] += v * q.l[i];
                }
            }
        }
        out
    }

    /// `(f, V_k)` on RT1.
    pub fn rt_load(&self, f: impl Fn(usize, &QPoint) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rt()];
        for t in 0..self.n_cells() {
            let d = &self.rt_idx[t];
            for q in self.qpoints(t) {
                let v = f(t, q);
                for k in 0..8 {
                    out[d[k]] += q.w * (v[0] * q.rv[k][0] + v[1] * q.rv[k][1]);
                }
            }
        }
        out
    }

    /// `(h, V_k . n)` over the boundary.
    pub fn rt_boundary_load(&self, h: impl Fn(Point) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rt()];
        for face in &self.boundary {
            let d = &self.rt_idx[face.triangle];
            for bp in &face.points {
                let v = bp.w * h(bp.x);
                for k in 0..8 {
                    out[d[k]] += v * bp.rvn[k];
                }
            }
        }
        out
    }

    /// Integral of a scalar expression over the domain.
    pub fn integrate(&self, f: impl Fn(usize, &QPoint) -> f64) -> f64 {
        (0..self.n_cells())
            .map(|t| self.qpoints(t).iter().map(|q| q.w * f(t, q)).sum::<f64>())
            .sum()
    }

    /// Integral over the boundary; `f(triangle, point)`.
    pub fn integrate_boundary(&self, f: impl Fn(usize, &BPoint) -> f64) -> f64 {
        self.boundary
            .iter()
            .map(|face| face.points.iter().map(|bp| bp.w * f(face.triangle, bp)).sum::<f64>())
            .sum()
    }

    pub fn cg_value(&self, c: &[f64], t: usize, l: &[f64; 3]) -> f64 {
        let d = self.cg_dofs(t);
        l[0] * c[d[0]] + l[1] * c[d[1]] + l[2] * c[d[2]]
    }

    pub fn dg_value(&self, c: &[f64], t: usize, l: &[f64; 3]) -> f64 {
        l[0] * c[3 * t] + l[1] * c[3 * t + 1] + l[2] * c[3 * t + 2]
    }

    /// Velocity and divergence of an RT1 coefficient vector at a quadrature point.
    pub fn rt_value(&self, c: &[f64], t: usize, q: &QPoint) -> ([f64; 2], f64) {
        let d = &self.rt_idx[t];
        let mut v = [0.0; 2];
        let mut div = 0.0;
        for k in 0..8 {
            let ck = c[d[k]];
            v[0] += ck * q.rv[k][0];
            v[1] += ck * q.rv[k][1];
            div += ck * q.rd[k];
        }
        (v, div)
    }

    pub fn cg_grad(&self, c: &[f64], t: usize) -> [f64; 2] {
        self.grad_local(&self.cg_local(c, t), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{interpolate, Function};

    fn asm(n: usize) -> Assembler {
        Assembler::new(Arc::new(Mesh::unit_square(n).unwrap())).unwrap()
    }

    #[test]
    fn divergence_of_constant_field_vanishes() {
        let a = asm(3);
        let u = interpolate(&a.rt, Function::Vector(&|_| [1.0, 0.0])).unwrap();
        let r = a.divergence().mul_vec(&u.coeffs);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn unit_mobility_gives_stiffness() {
        let a = asm(3);
        let k = a.assemble(Form::CgStiffness);
        let w = a.cg_stiffness_weighted(|_, q| 0.5 + 0.5 * (q.x[0] * 0.0 + 1.0));
        for (r, c, v) in k.iter() {
            assert!((w.get(r, c) - v).abs() < 1e-12);
        }
        // constants are in the kernel
        assert!(k.mul_vec(&vec![1.0; a.n_cg()]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mass_row_sums_are_patch_areas_over_three() {
        let a = asm(4);
        let m = a.assemble(Form::CgMass);
        let rows = m.mul_vec(&vec![1.0; a.n_cg()]);
        let mut patch = vec![0.0; a.n_cg()];
        for t in 0..a.n_cells() {
            for &v in &a.mesh.triangles[t] {
                patch[v] += a.mesh.triangle_area(t);
            }
        }
        for (r, p) in rows.iter().zip(&patch) {
            assert!((r - p / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_block_is_transpose_of_pressure_block() {
        let a = asm(2);
        let b = a.divergence();
        let bt = b.transpose();
        let mut alt = TripletBuilder::new(a.n_rt(), a.n_dg());
        for t in 0..a.n_cells() {
            for q in a.qpoints(t) {
                for k in 0..8 {
                    for j in 0..3 {
                        alt.push(a.rt_dofs(t)[k], 3 * t + j, q.w * q.rd[k] * q.l[j]);
                    }
                }
            }
        }
        let alt = alt.build();
        for (r, c, v) in alt.iter() {
            assert!((bt.get(r, c) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_forms_are_symmetric() {
        let a = asm(3);
        for f in [Form::CgMass, Form::CgStiffness, Form::RtMass, Form::DivDiv, Form::DgMass] {
            assert!(a.assemble(f).asymmetry() < 1e-12, "{f:?}");
        }
        assert!("nope".parse::<Form>().is_err());
    }

    #[test]
    fn boundary_integral_of_normal_component() {
        // div theorem: int_dOmega u.n = int_Omega div u for u = (x^2, xy)
        let a = asm(4);
        let u = interpolate(&a.rt, Function::Vector(&|p| [p[0] * p[0], p[0] * p[1]])).unwrap();
        let vol = a.integrate(|t, q| a.rt_value(&u.coeffs, t, q).1);
        let bnd = a.integrate_boundary(|t, bp| {
            a.rt_local(&u.coeffs, t).iter().zip(&bp.rvn).map(|(c, v)| c * v).sum::<f64>()
        });
        assert!((vol - bnd).abs() < 1e-13);
        assert!((vol - 1.5).abs() < 1e-12, "{vol}");
    }
}
