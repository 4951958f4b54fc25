//! Conforming triangulations of the unit square with uniform (red) refinement.
//!
//! Edges are stored with a global orientation from the lower to the higher
//! vertex index. The global unit normal of an edge is its tangent rotated
//! clockwise, so for every triangle the outward normal of a local edge equals
//! `sign * global_normal` with `sign` recorded in [`Mesh::tri_edge_signs`].

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Where a vertex of a refined mesh comes from in its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    Vertex(usize),
    EdgeMidpoint(usize),
}

/// Fine-to-coarse maps attached to a mesh produced by [`Mesh::refine_uniform`].
#[derive(Debug, Clone)]
pub struct ParentMap {
    pub coarse_vertices: usize,
    pub coarse_edges: usize,
    pub coarse_triangles: usize,
    pub vertex_origin: Vec<VertexOrigin>,
    /// Coarse triangle containing each fine triangle.
    pub cell_parent: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub triangle: usize,
    /// Local edge index inside `triangle` (opposite to local vertex `local`).
    pub local: usize,
    pub normal: Point,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Vertex pairs with `edges[e][0] < edges[e][1]`.
    pub edges: Vec<[usize; 2]>,
    /// Local edge `i` of a triangle joins local vertices `i+1` and `i+2`.
    pub tri_edges: Vec<[usize; 3]>,
    /// `+1` when the outward normal of the local edge matches the global edge normal.
    pub tri_edge_signs: Vec<[f64; 3]>,
    /// Incident triangles of each edge; the second slot is `None` on the boundary.
    pub edge_tris: Vec<[Option<usize>; 2]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub parent: Option<ParentMap>,
    pub h_max: f64,
}

impl Mesh {
    /// Structured mesh of `n x n` squares, each cut along its
    /// bottom-left to top-right diagonal.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMesh("subdivision count must be positive".into()));
        }
        let np = n + 1;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_parts(vertices, triangles, None)
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints. Coarse vertices keep their indices and the
    /// midpoint of coarse edge `e` becomes vertex `nv + e`. Children of coarse
    /// triangle `t` are `4t..4t+4`, the last one being the interior triangle.
    pub fn refine_uniform(&self) -> Result<Self> {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        let mut vertex_origin: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::Vertex).collect();
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertex_origin.push(VertexOrigin::EdgeMidpoint(e));
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut cell_parent = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let te = self.tri_edges[t];
            // local edge i is opposite local vertex i
            let m_bc = nv + te[0];
            let m_ca = nv + te[1];
            let m_ab = nv + te[2];
            triangles.push([a, m_ab, m_ca]);
            triangles.push([m_ab, b, m_bc]);
            triangles.push([m_ca, m_bc, c]);
            triangles.push([m_ab, m_bc, m_ca]);
            cell_parent.extend([t; 4]);
        }
        let parent = ParentMap {
            coarse_vertices: nv,
            coarse_edges: self.edges.len(),
            coarse_triangles: self.triangles.len(),
            vertex_origin,
            cell_parent,
        };
        Self::from_parts(vertices, triangles, Some(parent))
    }

    /// Builds edge and boundary data from vertices and CCW triangles and
    /// validates the result.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        parent: Option<ParentMap>,
    ) -> Result<Self> {
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut tri_edge_signs = Vec::with_capacity(triangles.len());

        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let mut te = [0usize; 3];
            let mut ts = [0.0; 3];
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                match edge_tris[e] {
                    [None, _] => edge_tris[e][0] = Some(t),
                    [Some(_), None] => edge_tris[e][1] = Some(t),
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({}, {}) shared by more than two triangles",
                            key.0, key.1
                        )))
                    }
                }
                te[i] = e;
                ts[i] = if a < b { 1.0 } else { -1.0 };
            }
            tri_edges.push(te);
            tri_edge_signs.push(ts);
        }

        let mut mesh = Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            tri_edge_signs,
            edge_tris,
            boundary_edges: Vec::new(),
            parent,
            h_max: 0.0,
        };

        let mut boundary = Vec::new();
        for (e, inc) in mesh.edge_tris.iter().enumerate() {
            if let [Some(t), None] = *inc {
                let local = mesh.tri_edges[t].iter().position(|&x| x == e).unwrap();
                let n = mesh.edge_normal(e);
                let s = mesh.tri_edge_signs[t][local];
                boundary.push(BoundaryEdge {
                    edge: e,
                    triangle: t,
                    local,
                    normal: [s * n[0], s * n[1]],
                });
            }
        }
        mesh.boundary_edges = boundary;
        mesh.h_max = (0..mesh.edges.len())
            .map(|e| mesh.edge_length(e))
            .fold(0.0, f64::max);
        mesh.check_conformity()?;
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area; positive for counterclockwise triangles.
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_points(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [p0, p1, p2] = self.triangle_points(t);
        [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    /// Unit normal of the globally oriented edge (tangent rotated clockwise).
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let (tx, ty) = (pb[0] - pa[0], pb[1] - pa[1]);
        let l = tx.hypot(ty);
        [ty / l, -tx / l]
    }

    /// Point at parameter `s` in `[0, 1]` along the globally oriented edge.
    pub fn edge_point(&self, e: usize, s: f64) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
    }

    /// Verifies the structural invariants: positive areas summing to the
    /// domain area, interior edges shared by two triangles with opposite
    /// local signs, unit outward normals on boundary edges that tile the
    /// boundary of the unit square.
    pub fn check_conformity(&self) -> Result<()> {
        let mut total = 0.0;
        for t in 0..self.n_triangles() {
            let a = self.triangle_area(t);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area {a}")));
            }
            total += a;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("areas sum to {total}, expected 1")));
        }
        for (e, inc) in self.edge_tris.iter().enumerate() {
            match *inc {
                [Some(t0), Some(t1)] => {
                    let s0 = self.local_sign(t0, e);
                    let s1 = self.local_sign(t1, e);
                    if s0 * s1 >= 0.0 {
                        return Err(Error::InvalidMesh(format!(
                            "interior edge {e} has inconsistent orientation"
                        )));
                    }
                }
                [Some(_), None] => {}
                _ => return Err(Error::InvalidMesh(format!("edge {e} has no triangle"))),
            }
        }
        let mut perimeter = 0.0;
        for be in &self.boundary_edges {
            let n = be.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMesh(format!("boundary edge {} normal not unit", be.edge)));
            }
            // the outward normal must point away from the opposite vertex
            let c = self.centroid(be.triangle);
            let m = self.edge_point(be.edge, 0.5);
            if n[0] * (m[0] - c[0]) + n[1] * (m[1] - c[1]) <= 0.0 {
                return Err(Error::InvalidMesh(format!("boundary edge {} normal points inward", be.edge)));
            }
            perimeter += self.edge_length(be.edge);
        }
        if (perimeter - 4.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("boundary length {perimeter}, expected 4")));
        }
        Ok(())
    }

    fn local_sign(&self, t: usize, e: usize) -> f64 {
        let i = self.tri_edges[t].iter().position(|&x| x == e).unwrap();
        self.tri_edge_signs[t][i]
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [p0, p1, p2] = self.triangle_points(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((x[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (x[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (x[1] - p0[1]) - (x[0] - p0[0]) * (p1[1] - p0[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Linear search for a triangle containing `x` (with a small tolerance).
    pub fn locate(&self, x: Point) -> Option<usize> {
        (0..self.n_triangles()).find(|&t| self.barycentric(t, x).iter().all(|&l| l >= -1e-12))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_counts() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (4, 2, 5));
        let m = Mesh::unit_square(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (9, 8, 16));
        // Euler: V - E + F = 2 with the outer face
        assert_eq!(m.n_vertices() + m.n_triangles() + 1 - m.n_edges(), 2);
    }

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(matches!(Mesh::unit_square(0), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn area_sums_to_one() {
        let m = Mesh::unit_square(4).unwrap();
        let total: f64 = (0..m.n_triangles()).map(|t| m.triangle_area(t)).sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn refinement_counts_and_h() {
        let m = Mesh::unit_square(1).unwrap();
        let f = m.refine_uniform().unwrap();
        assert_eq!(f.n_triangles(), 8);
        assert!((f.h_max - m.h_max / 2.0).abs() <= 1e-12);

        let mut m = Mesh::unit_square(2).unwrap();
        for k in 1..=3 {
            m = m.refine_uniform().unwrap();
            assert_eq!(m.n_triangles(), 8 * 4usize.pow(k));
        }
    }

    #[test]
    fn refinement_is_nested() {
        let c = Mesh::unit_square(3).unwrap();
        let f = c.refine_uniform().unwrap();
        let pm = f.parent.as_ref().unwrap();
        for (v, origin) in pm.vertex_origin.iter().enumerate() {
            let p = f.vertices[v];
            let q = match *origin {
                VertexOrigin::Vertex(cv) => c.vertices[cv],
                VertexOrigin::EdgeMidpoint(e) => c.edge_point(e, 0.5),
            };
            assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
        }
        // children lie inside their parent and tile it
        for ct in 0..c.n_triangles() {
            let kids: Vec<usize> = (0..f.n_triangles()).filter(|&t| pm.cell_parent[t] == ct).collect();
            assert_eq!(kids.len(), 4);
            let area: f64 = kids.iter().map(|&t| f.triangle_area(t)).sum();
            assert!((area - c.triangle_area(ct)).abs() < 1e-15);
            for &t in &kids {
                let b = c.barycentric(ct, f.centroid(t));
                assert!(b.iter().all(|&l| l > 0.0));
            }
        }
    }

    #[test]
    fn boundary_normals_outward() {
        let m = Mesh::unit_square(3).unwrap();
        assert_eq!(m.boundary_edges.len(), 12);
        for be in &m.boundary_edges {
            let x = m.edge_point(be.edge, 0.5);
            let expected = if x[0] < 1e-14 {
                [-1.0, 0.0]
            } else if x[0] > 1.0 - 1e-14 {
                [1.0, 0.0]
            } else if x[1] < 1e-14 {
                [0.0, -1.0]
            } else {
                [0.0, 1.0]
            };
            assert!((be.normal[0] - expected[0]).abs() < 1e-12);
            assert!((be.normal[1] - expected[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_orientation_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = vec![[0, 2, 1], [0, 2, 3]];
        assert!(Mesh::from_parts(v, t, None).is_err());
    }
}
