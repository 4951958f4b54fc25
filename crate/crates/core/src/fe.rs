//! Continuous P1, Raviart-Thomas of order one, and discontinuous P1 spaces.
//!
//! RT1 degrees of freedom on a triangle are the normal components at the two
//! Gauss points of each edge (ordered along the global edge orientation) and
//! the cell averages of both velocity components. The normal-component dofs
//! coincide, up to the factor `|e| / 2`, with the edge moments against P1, so
//! the moment-based interpolant built by [`rt_project`] is the canonical
//! Raviart-Thomas projection.

use std::sync::Arc;

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, VertexOrigin};
use crate::quadrature::{gauss_legendre_unit, QuadratureRule};

/// Edge parameters of the two RT1 normal-component dofs.
pub const RT_EDGE_POINTS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cg1,
    Rt1,
    Dg1,
}

/// Global dof indices and orientation signs of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellDofs {
    pub idx: [usize; 8],
    pub sign: [f64; 8],
    pub n: usize,
}

impl CellDofs {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).map(move |i| (self.idx[i], self.sign[i]))
    }
}

/// Local RT1 basis in physical coordinates, expressed in scaled monomials
/// around the cell centroid.
#[derive(Debug, Clone)]
pub struct RtCell {
    center: Point,
    scale: f64,
    /// `basis_k = sum_j coeffs[k][j] * m_j`, oriented by the local outward normal.
    coeffs: [[f64; 8]; 8],
}

fn rt_monomials(xi: f64, eta: f64) -> [[f64; 2]; 8] {
    [
        [1.0, 0.0],
        [xi, 0.0],
        [eta, 0.0],
        [0.0, 1.0],
        [0.0, xi],
        [0.0, eta],
        [xi * xi, xi * eta],
        [xi * eta, eta * eta],
    ]
}

fn rt_monomial_divs(xi: f64, eta: f64) -> [f64; 8] {
    [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0 * xi, 3.0 * eta]
}

impl RtCell {
    fn new(mesh: &Mesh, t: usize, quad: &QuadratureRule) -> Result<Self> {
        let area = mesh.triangle_area(t);
        let center = mesh.centroid(t);
        let scale = (2.0 * area).sqrt();
        let mono = |x: Point| rt_monomials((x[0] - center[0]) / scale, (x[1] - center[1]) / scale);

        let mut dofmat = SMatrix::<f64, 8, 8>::zeros();
        for le in 0..3 {
            let e = mesh.tri_edges[t][le];
            let sg = mesh.tri_edge_signs[t][le];
            let ng = mesh.edge_normal(e);
            let n = [sg * ng[0], sg * ng[1]];
            for (j, &s) in RT_EDGE_POINTS.iter().enumerate() {
                let m = mono(mesh.edge_point(e, s));
                for k in 0..8 {
                    dofmat[(2 * le + j, k)] = m[k][0] * n[0] + m[k][1] * n[1];
                }
            }
        }
        let pts = mesh.triangle_points(t);
        for (bary, &w) in quad.tri_points.iter().zip(&quad.tri_weights) {
            let m = mono(bary_to_point(&pts, bary));
            for k in 0..8 {
                dofmat[(6, k)] += w * m[k][0];
                dofmat[(7, k)] += w * m[k][1];
            }
        }
        let inv = dofmat
            .try_inverse()
            .ok_or_else(|| Error::InvalidMesh(format!("RT1 dof matrix singular on triangle {t}")))?;
        // coeffs = D^{-T}
        let mut coeffs = [[0.0; 8]; 8];
        for k in 0..8 {
            for j in 0..8 {
                coeffs[k][j] = inv[(j, k)];
            }
        }
        Ok(RtCell { center, scale, coeffs })
    }

    /// Values of the 8 local (outward-oriented) basis functions.
    pub fn values(&self, x: Point) -> [[f64; 2]; 8] {
        let m = rt_monomials((x[0] - self.center[0]) / self.scale, (x[1] - self.center[1]) / self.scale);
        let mut out = [[0.0; 2]; 8];
        for k in 0..8 {
            for j in 0..8 {
                out[k][0] += self.coeffs[k][j] * m[j][0];
                out[k][1] += self.coeffs[k][j] * m[j][1];
            }
        }
        out
    }

    pub fn divergences(&self, x: Point) -> [f64; 8] {
        let d = rt_monomial_divs((x[0] - self.center[0]) / self.scale, (x[1] - self.center[1]) / self.scale);
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = (0..8).map(|j| self.coeffs[k][j] * d[j]).sum::<f64>() / self.scale;
        }
        out
    }
}

pub fn bary_to_point(pts: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
        l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
    ]
}

/// Constant gradients of the barycentric coordinates of triangle `t`.
pub fn bary_gradients(mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = mesh.triangle_points(t);
    let d = 2.0 * mesh.triangle_area(t);
    [
        [(p1[1] - p2[1]) / d, (p2[0] - p1[0]) / d],
        [(p2[1] - p0[1]) / d, (p0[0] - p2[0]) / d],
        [(p0[1] - p1[1]) / d, (p1[0] - p0[0]) / d],
    ]
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    family: Family,
    mesh: Arc<Mesh>,
    rt: Option<Arc<Vec<RtCell>>>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: Family) -> Result<Self> {
        let rt = if family == Family::Rt1 {
            let quad = QuadratureRule::degree6();
            let cells = (0..mesh.n_triangles())
                .map(|t| RtCell::new(&mesh, t, &quad))
                .collect::<Result<Vec<_>>>()?;
            Some(Arc::new(cells))
        } else {
            None
        };
        Ok(FeSpace { family, mesh, rt })
    }

    pub fn cg1(mesh: Arc<Mesh>) -> Self {
        FeSpace { family: Family::Cg1, mesh, rt: None }
    }

    pub fn dg1(mesh: Arc<Mesh>) -> Self {
        FeSpace { family: Family::Dg1, mesh, rt: None }
    }

    pub fn rt1(mesh: Arc<Mesh>) -> Result<Self> {
        Self::new(mesh, Family::Rt1)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn ndofs(&self) -> usize {
        let m = &self.mesh;
        match self.family {
            Family::Cg1 => m.n_vertices(),
            Family::Rt1 => 2 * m.n_edges() + 2 * m.n_triangles(),
            Family::Dg1 => 3 * m.n_triangles(),
        }
    }

    pub fn cell_dofs(&self, t: usize) -> CellDofs {
        let mut idx = [0usize; 8];
        let mut sign = [1.0; 8];
        match self.family {
            Family::Cg1 => {
                idx[..3].copy_from_slice(&self.mesh.triangles[t]);
                CellDofs { idx, sign, n: 3 }
            }
            Family::Dg1 => {
                for i in 0..3 {
                    idx[i] = 3 * t + i;
                }
                CellDofs { idx, sign, n: 3 }
            }
            Family::Rt1 => {
                for le in 0..3 {
                    let e = self.mesh.tri_edges[t][le];
                    for j in 0..2 {
                        idx[2 * le + j] = 2 * e + j;
                        sign[2 * le + j] = self.mesh.tri_edge_signs[t][le];
                    }
                }
                let off = 2 * self.mesh.n_edges() + 2 * t;
                idx[6] = off;
                idx[7] = off + 1;
                CellDofs { idx, sign, n: 8 }
            }
        }
    }

    pub fn rt_cell(&self, t: usize) -> &RtCell {
        &self.rt.as_ref().expect("not an RT1 space")[t]
    }

    /// Globally oriented RT1 basis values on cell `t` (sign applied).
    pub fn rt_values(&self, t: usize, x: Point) -> ([[f64; 2]; 8], [f64; 8]) {
        let cell = self.rt_cell(t);
        let mut v = cell.values(x);
        let mut d = cell.divergences(x);
        let dofs = self.cell_dofs(t);
        for k in 0..8 {
            v[k][0] *= dofs.sign[k];
            v[k][1] *= dofs.sign[k];
            d[k] *= dofs.sign[k];
        }
        (v, d)
    }

    pub fn same_as(&self, other: &FeSpace) -> bool {
        self.family == other.family && Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

/// Analytic input for interpolation.
pub enum Function<'a> {
    Scalar(&'a dyn Fn(Point) -> f64),
    Vector(&'a dyn Fn(Point) -> [f64; 2]),
}

#[derive(Debug, Clone)]
pub struct FeField {
    pub space: FeSpace,
    pub coeffs: Vec<f64>,
}

impl FeField {
    pub fn zeros(space: &FeSpace) -> Self {
        FeField { coeffs: vec![0.0; space.ndofs()], space: space.clone() }
    }

    pub fn from_coeffs(space: &FeSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.ndofs()
            )));
        }
        Ok(FeField { space: space.clone(), coeffs })
    }

    fn local_coeffs(&self, t: usize) -> ([f64; 8], usize) {
        let dofs = self.space.cell_dofs(t);
        let mut c = [0.0; 8];
        for i in 0..dofs.n {
            c[i] = self.coeffs[dofs.idx[i]];
        }
        (c, dofs.n)
    }

    /// Value of a CG1/DG1 field at `x` inside triangle `t`.
    pub fn eval_scalar(&self, t: usize, x: Point) -> f64 {
        debug_assert_ne!(self.space.family, Family::Rt1);
        let l = self.space.mesh.barycentric(t, x);
        let (c, _) = self.local_coeffs(t);
        l[0] * c[0] + l[1] * c[1] + l[2] * c[2]
    }

    /// Value of a CG1/DG1 field at barycentric coordinates of triangle `t`.
    pub fn eval_scalar_bary(&self, t: usize, l: &[f64; 3]) -> f64 {
        let (c, _) = self.local_coeffs(t);
        l[0] * c[0] + l[1] * c[1] + l[2] * c[2]
    }

    pub fn grad_scalar(&self, t: usize) -> [f64; 2] {
        let g = bary_gradients(&self.space.mesh, t);
        let (c, _) = self.local_coeffs(t);
        [
            c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
            c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
        ]
    }

    pub fn eval_vector(&self, t: usize, x: Point) -> [f64; 2] {
        let (v, _) = self.space.rt_values(t, x);
        let (c, _) = self.local_coeffs(t);
        let mut out = [0.0; 2];
        for k in 0..8 {
            out[0] += c[k] * v[k][0];
            out[1] += c[k] * v[k][1];
        }
        out
    }

    pub fn eval_div(&self, t: usize, x: Point) -> f64 {
        let (_, d) = self.space.rt_values(t, x);
        let (c, _) = self.local_coeffs(t);
        (0..8).map(|k| c[k] * d[k]).sum()
    }

    /// Scalar value at an arbitrary point of the domain.
    pub fn eval_at(&self, x: Point) -> Option<f64> {
        self.space.mesh.locate(x).map(|t| self.eval_scalar(t, x))
    }

    pub fn eval_vector_at(&self, x: Point) -> Option<[f64; 2]> {
        self.space.mesh.locate(x).map(|t| self.eval_vector(t, x))
    }

    /// Divergence of an RT1 field as a DG1 field (exact, cellwise P1).
    pub fn div_dg1(&self, dg: &FeSpace) -> Result<FeField> {
        if self.space.family != Family::Rt1 || dg.family != Family::Dg1 {
            return Err(Error::FamilyMismatch("div_dg1 needs an RT1 field and a DG1 space".into()));
        }
        let mesh = &self.space.mesh;
        let mut out = vec![0.0; dg.ndofs()];
        for t in 0..mesh.n_triangles() {
            let pts = mesh.triangle_points(t);
            for i in 0..3 {
                out[3 * t + i] = self.eval_div(t, pts[i]);
            }
        }
        FeField::from_coeffs(dg, out)
    }
}

/// Nodal interpolation (CG1/DG1) or canonical moment interpolation (RT1).
pub fn interpolate(space: &FeSpace, f: Function<'_>) -> Result<FeField> {
    let mesh = space.mesh();
    match (space.family(), f) {
        (Family::Cg1, Function::Scalar(f)) => {
            let c = mesh.vertices.iter().map(|&p| f(p)).collect();
            FeField::from_coeffs(space, c)
        }
        (Family::Dg1, Function::Scalar(f)) => {
            let mut c = Vec::with_capacity(space.ndofs());
            for t in 0..mesh.n_triangles() {
                for p in mesh.triangle_points(t) {
                    c.push(f(p));
                }
            }
            FeField::from_coeffs(space, c)
        }
        (Family::Rt1, Function::Vector(f)) => rt_project(space, &|_, x| f(x)),
        (fam, _) => Err(Error::FamilyMismatch(format!(
            "cannot interpolate a function of this rank into {fam:?}"
        ))),
    }
}

/// Red sub-triangles of a triangle in barycentric coordinates.
const RED_CHILDREN: [[[f64; 3]; 3]; 4] = [
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
    [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
    [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
];

/// Raviart-Thomas projection: matches the P1 normal moments on every edge and
/// the constant-vector moments on every cell. `f(cell, x)` evaluates the
/// input inside `cell` of the target mesh; edge moments use a two-piece
/// composite Gauss rule and cell moments the four red sub-triangles, so inputs
/// that are piecewise polynomial on the red refinement are integrated exactly.
pub fn rt_project(space: &FeSpace, f: &dyn Fn(usize, Point) -> [f64; 2]) -> Result<FeField> {
    if space.family() != Family::Rt1 {
        return Err(Error::FamilyMismatch("rt_project needs an RT1 target".into()));
    }
    let mesh = space.mesh();
    let quad = QuadratureRule::degree6();
    let (gp, gw) = gauss_legendre_unit(5);
    let [s0, s1] = RT_EDGE_POINTS;
    let mut c = vec![0.0; space.ndofs()];
    for e in 0..mesh.n_edges() {
        let cell = mesh.edge_tris[e][0].expect("edge without triangle");
        let n = mesh.edge_normal(e);
        let mut m = [0.0; 2];
        for half in 0..2 {
            for (&p, &w) in gp.iter().zip(&gw) {
                let s = 0.5 * (half as f64 + p);
                let v = f(cell, mesh.edge_point(e, s));
                let vn = v[0] * n[0] + v[1] * n[1];
                m[0] += 0.5 * w * vn * (s - s1) / (s0 - s1);
                m[1] += 0.5 * w * vn * (s - s0) / (s1 - s0);
            }
        }
        // (2 / |e|) * int_e v.n L_j ds
        c[2 * e] = 2.0 * m[0];
        c[2 * e + 1] = 2.0 * m[1];
    }
    let off = 2 * mesh.n_edges();
    for t in 0..mesh.n_triangles() {
        let pts = mesh.triangle_points(t);
        let mut avg = [0.0; 2];
        for child in &RED_CHILDREN {
            for (l, &w) in quad.tri_points.iter().zip(&quad.tri_weights) {
                let lp = [0, 1, 2].map(|i| l[0] * child[0][i] + l[1] * child[1][i] + l[2] * child[2][i]);
                let v = f(t, bary_to_point(&pts, &lp));
                avg[0] += 0.25 * w * v[0];
                avg[1] += 0.25 * w * v[1];
            }
        }
        c[off + 2 * t] = avg[0];
        c[off + 2 * t + 1] = avg[1];
    }
    FeField::from_coeffs(space, c)
}

/// Projects an RT1 field living on the uniform refinement of `coarse`'s mesh
/// onto `coarse` with the Raviart-Thomas projection.
pub fn rt_project_fine(fine: &FeField, coarse: &FeSpace) -> Result<FeField> {
    check_nested(coarse.mesh(), fine.space.mesh())?;
    let fm = fine.space.mesh().clone();
    rt_project(coarse, &|t, x| {
        let child = (4 * t..4 * t + 4)
            .max_by(|&a, &b| {
                let ma = fm.barycentric(a, x).iter().cloned().fold(f64::INFINITY, f64::min);
                let mb = fm.barycentric(b, x).iter().cloned().fold(f64::INFINITY, f64::min);
                ma.total_cmp(&mb)
            })
            .unwrap();
        fine.eval_vector(child, x)
    })
}

fn check_nested(coarse: &Mesh, fine: &Mesh) -> Result<()> {
    let pm = fine
        .parent
        .as_ref()
        .ok_or_else(|| Error::NotNested("fine mesh has no parent map".into()))?;
    if pm.coarse_vertices != coarse.n_vertices()
        || pm.coarse_edges != coarse.n_edges()
        || pm.coarse_triangles != coarse.n_triangles()
    {
        return Err(Error::NotNested("parent map does not match the coarse mesh".into()));
    }
    Ok(())
}

/// Exact representation of a coarse field on the uniformly refined mesh.
pub fn prolong(coarse: &FeField, fine_space: &FeSpace) -> Result<FeField> {
    if coarse.space.family() != fine_space.family() {
        return Err(Error::FamilyMismatch("prolongation between different families".into()));
    }
    let cm = coarse.space.mesh();
    let fm = fine_space.mesh();
    check_nested(cm, fm)?;
    let pm = fm.parent.as_ref().unwrap();
    match fine_space.family() {
        Family::Cg1 => {
            let c = pm
                .vertex_origin
                .iter()
                .map(|o| match *o {
                    VertexOrigin::Vertex(v) => coarse.coeffs[v],
                    VertexOrigin::EdgeMidpoint(e) => {
                        let [a, b] = cm.edges[e];
                        0.5 * (coarse.coeffs[a] + coarse.coeffs[b])
                    }
                })
                .collect();
            FeField::from_coeffs(fine_space, c)
        }
        Family::Dg1 => {
            let mut c = Vec::with_capacity(fine_space.ndofs());
            for t in 0..fm.n_triangles() {
                let parent = pm.cell_parent[t];
                for p in fm.triangle_points(t) {
                    c.push(coarse.eval_scalar(parent, p));
                }
            }
            FeField::from_coeffs(fine_space, c)
        }
        Family::Rt1 => rt_project(fine_space, &|t, x| coarse.eval_vector(pm.cell_parent[t], x)),
    }
}

/// Discrete Laplacian on CG1: `(Delta_h u, psi) = -(grad u, grad psi)` for
/// all `psi`, solved with the consistent mass matrix. The result is projected
/// to zero mean to remove rounding.
pub fn discrete_laplacian(asm: &crate::assembly::Assembler, u: &FeField) -> Result<FeField> {
    if u.space.family != Family::Cg1 || u.coeffs.len() != asm.n_cg() {
        return Err(Error::FamilyMismatch("discrete_laplacian needs a CG1 field on the assembler mesh".into()));
    }
    let mass = asm.assemble(crate::assembly::Form::CgMass);
    let stiff = asm.assemble(crate::assembly::Form::CgStiffness);
    let rhs: Vec<f64> = stiff.mul_vec(&u.coeffs).iter().map(|v| -v).collect();
    let mut lap = crate::linalg::lu_solve(&mass, &rhs)?;
    let ones = vec![1.0; lap.len()];
    let mean = mass.form(&ones, &lap) / mass.form(&ones, &ones);
    lap.iter_mut().for_each(|c| *c -= mean);
    FeField::from_coeffs(&asm.cg, lap)
}
