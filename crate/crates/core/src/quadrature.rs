//! Fixed quadrature rules on the reference triangle and reference edge.

/// Barycentric points and weights normalised to the reference measure
/// (weights sum to one, multiply by the element area or edge length).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub tri_points: Vec<[f64; 3]>,
    pub tri_weights: Vec<f64>,
    /// Parameters in `[0, 1]` along an edge.
    pub edge_points: Vec<f64>,
    pub edge_weights: Vec<f64>,
    pub tri_degree: usize,
    pub edge_degree: usize,
}

const D6_W: [f64; 3] = [
    0.116_786_275_726_379_37,
    0.050_844_906_370_206_82,
    0.082_851_075_618_373_58,
];
const D6_A: f64 = 0.249_286_745_170_910_42;
const D6_B: f64 = 0.063_089_014_491_502_23;
const D6_C: [f64; 2] = [0.053_145_049_844_816_95, 0.310_352_451_033_784_4];

impl QuadratureRule {
    /// 12-point degree-6 rule on triangles, 3-point Gauss (degree 5) on edges.
    pub fn degree6() -> Self {
        let mut tri_points = Vec::with_capacity(12);
        let mut tri_weights = Vec::with_capacity(12);
        for &(a, w) in &[(D6_A, D6_W[0]), (D6_B, D6_W[1])] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                tri_points.push(p);
                tri_weights.push(w);
            }
        }
        let [a, b] = D6_C;
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            tri_points.push(p);
            tri_weights.push(D6_W[2]);
        }
        let (edge_points, edge_weights) = gauss_legendre_unit(3);
        QuadratureRule {
            tri_points,
            tri_weights,
            edge_points,
            edge_weights,
            tri_degree: 6,
            edge_degree: 5,
        }
    }

    /// Integrates a function of barycentric coordinates over the reference
    /// triangle of unit measure.
    pub fn integrate_tri(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.tri_points
            .iter()
            .zip(&self.tri_weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }

    /// Largest absolute error over monomials `l1^i l2^j` with `i + j <= deg`
    /// on the triangle and `s^k`, `k <= deg`, on the edge.
    pub fn exactness_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=self.tri_degree {
            for j in 0..=(self.tri_degree - i) {
                // int over unit-measure triangle of l1^i l2^j = 2 i! j! / (i+j+2)!
                let exact = 2.0 * factorial(i) * factorial(j) / factorial(i + j + 2);
                let q = self.integrate_tri(|l| l[1].powi(i as i32) * l[2].powi(j as i32));
                worst = worst.max((q - exact).abs());
            }
        }
        for k in 0..=self.edge_degree {
            let exact = 1.0 / (k as f64 + 1.0);
            let q: f64 = self
                .edge_points
                .iter()
                .zip(&self.edge_weights)
                .map(|(&s, &w)| w * s.powi(k as i32))
                .sum();
            worst = worst.max((q - exact).abs());
        }
        worst
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // map from [-1, 1] to [0, 1], ascending
        x[n - 1 - i] = 0.5 * (z + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}
