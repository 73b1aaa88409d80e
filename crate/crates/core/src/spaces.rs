//! Crouzeix-Raviart and lowest-order Raviart-Thomas spaces, element and side means, and
//! the quasi-interpolants onto both spaces.

use crate::mesh::{Mesh, Point};
use crate::quadrature::QuadratureOrder;

/// Crouzeix-Raviart function stored by its side means, one per side. Dirichlet sides
/// carry their prescribed values.
#[derive(Debug, Clone, PartialEq)]
pub struct CrFunction(pub Vec<f64>);

/// Lowest-order Raviart-Thomas field stored by its constant normal flux `y . n_S` per side,
/// measured against the fixed side normal of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RtField(pub Vec<f64>);

/// One scalar per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PwConstant(pub Vec<f64>);

/// One vector per element.
#[derive(Debug, Clone, PartialEq)]
pub struct PwVector(pub Vec<[f64; 2]>);

/// One scalar per side; entries outside the side family of interest are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SideConstant(pub Vec<f64>);

/// Continuous piecewise affine function stored by its vertex values.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Function(pub Vec<f64>);

impl P1Function {
    pub fn eval(&self, mesh: &Mesh, t: usize, x: Point) -> f64 {
        let l = mesh.barycentric(t, x);
        let tri = mesh.triangles()[t];
        (0..3).map(|i| l[i] * self.0[tri[i]]).sum()
    }

    pub fn element_gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        let [a, b, c] = mesh.element_points(t);
        let tri = mesh.triangles()[t];
        let (va, vb, vc) = (self.0[tri[0]], self.0[tri[1]], self.0[tri[2]]);
        let det = 2.0 * mesh.area(t);
        [
            (va * (b[1] - c[1]) + vb * (c[1] - a[1]) + vc * (a[1] - b[1])) / det,
            (va * (c[0] - b[0]) + vb * (a[0] - c[0]) + vc * (b[0] - a[0])) / det,
        ]
    }

    /// The same function viewed as a Crouzeix-Raviart function (side midpoint values).
    pub fn to_cr(&self, mesh: &Mesh) -> CrFunction {
        CrFunction(mesh.sides().iter().map(|s| 0.5 * (self.0[s.vertices[0]] + self.0[s.vertices[1]])).collect())
    }
}

/// Gradient of the basis function of local side `j` on element `t`.
pub fn cr_basis_gradient(mesh: &Mesh, t: usize, j: usize) -> [f64; 2] {
    let s = mesh.side(mesh.element_sides(t)[j]);
    let n = mesh.outward_normal(t, j);
    let scale = s.length / mesh.area(t);
    [scale * n[0], scale * n[1]]
}

/// Value at `x` of the basis field of local side `j` on element `t`.
pub fn rt_basis(mesh: &Mesh, t: usize, j: usize, x: Point) -> [f64; 2] {
    let s = mesh.side(mesh.element_sides(t)[j]);
    let p = mesh.element_points(t)[j];
    let scale = mesh.orientation(t, j) * s.length / (2.0 * mesh.area(t));
    [scale * (x[0] - p[0]), scale * (x[1] - p[1])]
}

/// Divergence of the basis field of local side `j` on element `t`.
pub fn rt_basis_divergence(mesh: &Mesh, t: usize, j: usize) -> f64 {
    let s = mesh.side(mesh.element_sides(t)[j]);
    mesh.orientation(t, j) * s.length / mesh.area(t)
}

impl CrFunction {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.num_sides()])
    }

    pub fn local(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        mesh.element_sides(t).map(|s| self.0[s])
    }

    /// Value on element `t` at the point `x`.
    pub fn eval(&self, mesh: &Mesh, t: usize, x: Point) -> f64 {
        let c = self.local(mesh, t);
        let l = mesh.barycentric(t, x);
        (0..3).map(|j| c[j] * (1.0 - 2.0 * l[j])).sum()
    }

    /// Traces of the element-`t` polynomial at its three vertices.
    pub fn vertex_values(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        let c = self.local(mesh, t);
        [c[1] + c[2] - c[0], c[2] + c[0] - c[1], c[0] + c[1] - c[2]]
    }

    pub fn element_gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        let c = self.local(mesh, t);
        (0..3).fold([0.0, 0.0], |acc, j| {
            let g = cr_basis_gradient(mesh, t, j);
            [acc[0] + c[j] * g[0], acc[1] + c[j] * g[1]]
        })
    }

    /// Piecewise gradient `grad_h v`.
    pub fn gradient(&self, mesh: &Mesh) -> PwVector {
        PwVector((0..mesh.num_elements()).map(|t| self.element_gradient(mesh, t)).collect())
    }

    /// Element means `Pi_h v`.
    pub fn element_means(&self, mesh: &Mesh) -> PwConstant {
        PwConstant(
            (0..mesh.num_elements())
                .map(|t| self.local(mesh, t).iter().sum::<f64>() / 3.0)
                .collect(),
        )
    }

    /// Side means `pi_h v`, which are the coefficients themselves.
    pub fn side_means(&self) -> SideConstant {
        SideConstant(self.0.clone())
    }
}

impl RtField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self(vec![0.0; mesh.num_sides()])
    }

    pub fn eval(&self, mesh: &Mesh, t: usize, x: Point) -> [f64; 2] {
        let sides = mesh.element_sides(t);
        (0..3).fold([0.0, 0.0], |acc, j| {
            let psi = rt_basis(mesh, t, j, x);
            let f = self.0[sides[j]];
            [acc[0] + f * psi[0], acc[1] + f * psi[1]]
        })
    }

    pub fn element_divergence(&self, mesh: &Mesh, t: usize) -> f64 {
        let sides = mesh.element_sides(t);
        (0..3).map(|j| self.0[sides[j]] * rt_basis_divergence(mesh, t, j)).sum()
    }

    pub fn divergence(&self, mesh: &Mesh) -> PwConstant {
        PwConstant((0..mesh.num_elements()).map(|t| self.element_divergence(mesh, t)).collect())
    }

    /// Element means `Pi_h y`, the values at the centroids.
    pub fn element_means(&self, mesh: &Mesh) -> PwVector {
        PwVector((0..mesh.num_elements()).map(|t| self.eval(mesh, t, mesh.centroid(t))).collect())
    }

    /// Outward flux of element `t` across its local side `j`.
    pub fn outward_flux(&self, mesh: &Mesh, t: usize, j: usize) -> f64 {
        mesh.orientation(t, j) * self.0[mesh.element_sides(t)[j]]
    }
}

/// Element means of `f`.
pub fn project_elementwise(mesh: &Mesh, quad: QuadratureOrder, f: impl Fn(Point) -> f64) -> PwConstant {
    let rule = quad.triangle_rule();
    PwConstant((0..mesh.num_elements()).map(|t| rule.mean(mesh.element_points(t), &f)).collect())
}

/// Side means of `f` over every side.
pub fn project_sidewise(mesh: &Mesh, quad: QuadratureOrder, f: impl Fn(Point) -> f64) -> SideConstant {
    let rule = quad.line_rule();
    SideConstant(
        mesh.sides()
            .iter()
            .map(|s| {
                let [a, b] = s.vertices;
                rule.segment_mean(mesh.vertices()[a], mesh.vertices()[b], &f)
            })
            .collect(),
    )
}

/// Crouzeix-Raviart quasi-interpolant: the side means of `v`.
pub fn interpolate_cr(mesh: &Mesh, quad: QuadratureOrder, v: impl Fn(Point) -> f64) -> CrFunction {
    CrFunction(project_sidewise(mesh, quad, v).0)
}

/// Raviart-Thomas quasi-interpolant: side means of the normal component of `y`.
pub fn interpolate_rt(mesh: &Mesh, quad: QuadratureOrder, y: impl Fn(Point) -> [f64; 2]) -> RtField {
    let rule = quad.line_rule();
    RtField(
        mesh.sides()
            .iter()
            .map(|s| {
                let [a, b] = s.vertices;
                rule.segment_mean(mesh.vertices()[a], mesh.vertices()[b], |x| {
                    let v = y(x);
                    v[0] * s.normal[0] + v[1] * s.normal[1]
                })
            })
            .collect(),
    )
}

/// `(grad_h v, Pi_h y) + (Pi_h v, div y) - (pi_h v, y . n)` over the boundary, which vanishes
/// identically for every Crouzeix-Raviart `v` and Raviart-Thomas `y`.
pub fn discrete_ibp_residual(mesh: &Mesh, v: &CrFunction, y: &RtField) -> f64 {
    let grad = v.gradient(mesh);
    let vbar = v.element_means(mesh);
    let ybar = y.element_means(mesh);
    let div = y.divergence(mesh);
    let volume: f64 = (0..mesh.num_elements())
        .map(|t| {
            let g = grad.0[t];
            let q = ybar.0[t];
            mesh.area(t) * (g[0] * q[0] + g[1] * q[1] + vbar.0[t] * div.0[t])
        })
        .sum();
    let boundary: f64 = mesh
        .sides()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_boundary())
        .map(|(i, s)| s.length * v.0[i] * y.0[i])
        .sum();
    volume - boundary
}

/// Sum of the absolute values of all terms in [`discrete_ibp_residual`], the natural scale
/// for its rounding error.
pub fn discrete_ibp_magnitude(mesh: &Mesh, v: &CrFunction, y: &RtField) -> f64 {
    let grad = v.gradient(mesh);
    let vbar = v.element_means(mesh);
    let ybar = y.element_means(mesh);
    let div = y.divergence(mesh);
    let volume: f64 = (0..mesh.num_elements())
        .map(|t| {
            let (g, q) = (grad.0[t], ybar.0[t]);
            mesh.area(t) * ((g[0] * q[0]).abs() + (g[1] * q[1]).abs() + (vbar.0[t] * div.0[t]).abs())
        })
        .sum();
    let boundary: f64 =
        mesh.sides().iter().enumerate().filter(|(_, s)| s.is_boundary()).map(|(i, s)| (s.length * v.0[i] * y.0[i]).abs()).sum();
    volume + boundary
}

/// `|a|^2` weighted by element areas: `sum_T |T| |a_T|^2`.
pub fn pw_norm_sq(mesh: &Mesh, a: &PwVector) -> f64 {
    a.0.iter().enumerate().map(|(t, v)| mesh.area(t) * (v[0] * v[0] + v[1] * v[1])).sum()
}

/// `sum_T |T| (a_T - b_T)^2` for vector fields.
pub fn pw_distance_sq(mesh: &Mesh, a: &PwVector, b: &PwVector) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .enumerate()
        .map(|(t, (p, q))| mesh.area(t) * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)))
        .sum()
}

/// `sum_T |T| a_T b_T`.
pub fn pw_inner(mesh: &Mesh, a: &PwConstant, b: &PwConstant) -> f64 {
    a.0.iter().zip(&b.0).enumerate().map(|(t, (p, q))| mesh.area(t) * p * q).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryLabel, DomainSpec, MarkedSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn reference_triangle() -> Mesh {
        let labels: HashMap<[usize; 2], BoundaryLabel> =
            [([0, 1], BoundaryLabel::Contact), ([1, 2], BoundaryLabel::Dirichlet), ([0, 2], BoundaryLabel::Neumann)]
                .into_iter()
                .collect();
        Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &labels).unwrap()
    }

    fn square(levels: usize) -> Mesh {
        let mut m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap();
        for _ in 0..levels {
            m = m.red_refine();
        }
        m
    }

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14
    }

    #[test]
    fn cr_basis_gradients_on_reference_triangle() {
        let m = reference_triangle();
        assert!(close(cr_basis_gradient(&m, 0, 0), [2.0, 2.0]));
        assert!(close(cr_basis_gradient(&m, 0, 1), [-2.0, 0.0]));
        assert!(close(cr_basis_gradient(&m, 0, 2), [0.0, -2.0]));
        let sum = (0..3).fold([0.0, 0.0], |a, j| {
            let g = cr_basis_gradient(&m, 0, j);
            [a[0] + g[0], a[1] + g[1]]
        });
        assert!(close(sum, [0.0, 0.0]));
    }

    #[test]
    fn cr_basis_is_one_at_own_midpoint() {
        let m = reference_triangle();
        for j in 0..3 {
            let mut c = CrFunction::zeros(&m);
            c.0[m.element_sides(0)[j]] = 1.0;
            for k in 0..3 {
                let mid = m.side(m.element_sides(0)[k]).midpoint;
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((c.eval(&m, 0, mid) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rt_basis_degrees_of_freedom() {
        let m = reference_triangle();
        let hyp = m.side(m.element_sides(0)[0]);
        let psi = rt_basis(&m, 0, 0, hyp.midpoint);
        assert!((psi[0] * hyp.normal[0] + psi[1] * hyp.normal[1] - 1.0).abs() < 1e-15);
        // Bottom side basis (opposite vertex 2) has zero normal component on the left side.
        let left = m.side(m.element_sides(0)[1]);
        for s in [0.1, 0.5, 0.9] {
            let x = [0.0, s];
            let psi = rt_basis(&m, 0, 2, x);
            assert!((psi[0] * left.normal[0] + psi[1] * left.normal[1]).abs() < 1e-15);
        }
        assert!((rt_basis_divergence(&m, 0, 0) - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn projections_of_polynomials() {
        let m = reference_triangle();
        let q = QuadratureOrder::default();
        assert!((project_elementwise(&m, q, |x| x[0]).0[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((project_elementwise(&m, q, |_| 5.0).0[0] - 5.0).abs() < 1e-14);
        assert!((project_elementwise(&m, q, |x| x[0] * x[0]).0[0] - 1.0 / 6.0).abs() < 1e-15);
        let bottom = m.element_sides(0)[2];
        let sm = project_sidewise(&m, q, |x| x[0] * x[0]);
        assert!((sm.0[bottom] - 1.0 / 3.0).abs() < 1e-15);
        let aff = project_sidewise(&m, q, |x| 2.0 * x[0] - x[1] + 1.0);
        for (i, s) in m.sides().iter().enumerate() {
            let mid = s.midpoint;
            assert!((aff.0[i] - (2.0 * mid[0] - mid[1] + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn projections_are_idempotent() {
        let m = square(2);
        let q = QuadratureOrder::default();
        let v = interpolate_cr(&m, q, |x| (3.0 * x[0]).sin() + x[1]);
        let again = interpolate_cr(&m, q, |x| {
            let t = (0..m.num_elements()).find(|&t| m.barycentric(t, x).iter().all(|&l| l >= -1e-12)).unwrap();
            v.eval(&m, t, x)
        });
        for (a, b) in v.0.iter().zip(&again.0) {
            assert!((a - b).abs() < 1e-13);
        }
        let means = v.element_means(&m);
        let means2 = project_elementwise(&m, q, |x| {
            let t = (0..m.num_elements()).find(|&t| m.barycentric(t, x).iter().all(|&l| l >= -1e-12)).unwrap();
            means.0[t]
        });
        for (a, b) in means.0.iter().zip(&means2.0) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn affine_functions_are_reproduced() {
        let m = square(2);
        let q = QuadratureOrder::default();
        let v = interpolate_cr(&m, q, |x| 0.3 * x[0] - 1.7 * x[1] + 0.25);
        for g in v.gradient(&m).0 {
            assert!(close(g, [0.3, -1.7]));
        }
        let y = interpolate_rt(&m, q, |_| [1.0, 0.0]);
        for t in 0..m.num_elements() {
            assert!(close(y.eval(&m, t, m.element_points(t)[1]), [1.0, 0.0]));
            assert!(y.element_divergence(&m, t).abs() < 1e-13);
        }
    }

    #[test]
    fn checkerboard_gradients_match_hand_computation() {
        let m = square(1);
        let mut v = CrFunction::zeros(&m);
        for (i, c) in v.0.iter_mut().enumerate() {
            *c = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        for t in 0..m.num_elements() {
            // grad of sum c_j (1 - 2 lambda_j) = -2 sum c_j grad lambda_j.
            let [a, b, c] = m.element_points(t);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            let gl = [
                [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
            ];
            let coeff = v.local(&m, t);
            let expected = (0..3).fold([0.0, 0.0], |acc, j| {
                [acc[0] - 2.0 * coeff[j] * gl[j][0], acc[1] - 2.0 * coeff[j] * gl[j][1]]
            });
            let got = v.element_gradient(&m, t);
            assert!((got[0] - expected[0]).abs() < 1e-13 && (got[1] - expected[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn cr_interpolant_preserves_gradient_means() {
        let m = square(2);
        let q = QuadratureOrder::uniform(10);
        let v = |x: Point| (2.0 * x[0]).sin() * (x[1] + 0.5).exp();
        let grad = |x: Point| [2.0 * (2.0 * x[0]).cos() * (x[1] + 0.5).exp(), (2.0 * x[0]).sin() * (x[1] + 0.5).exp()];
        let gh = interpolate_cr(&m, q, v).gradient(&m);
        let g0 = project_elementwise(&m, q, |x| grad(x)[0]);
        let g1 = project_elementwise(&m, q, |x| grad(x)[1]);
        for t in 0..m.num_elements() {
            assert!((gh.0[t][0] - g0.0[t]).abs() < 1e-10);
            assert!((gh.0[t][1] - g1.0[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn rt_interpolant_preserves_divergence_means() {
        let m = square(2);
        let q = QuadratureOrder::uniform(10);
        let y = |x: Point| [x[0] * x[0] * x[1], (x[0] + x[1]).cos()];
        let div = |x: Point| 2.0 * x[0] * x[1] - (x[0] + x[1]).sin();
        let dh = interpolate_rt(&m, q, y).divergence(&m);
        let d0 = project_elementwise(&m, q, div);
        for t in 0..m.num_elements() {
            assert!((dh.0[t] - d0.0[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn fluxes_sum_to_divergence() {
        let m = square(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = RtField((0..m.num_sides()).map(|_| rng.random_range(-1.0..1.0)).collect());
        for t in 0..m.num_elements() {
            let out: f64 = (0..3)
                .map(|j| m.side(m.element_sides(t)[j]).length * y.outward_flux(&m, t, j))
                .sum();
            assert!((out - m.area(t) * y.element_divergence(&m, t)).abs() < 1e-14);
        }
    }

    #[test]
    fn rt_normal_component_is_continuous() {
        let m = square(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = RtField((0..m.num_sides()).map(|_| rng.random_range(-1.0..1.0)).collect());
        for (i, s) in m.sides().iter().enumerate() {
            let Some(plus) = s.plus else { continue };
            let [a, b] = s.vertices;
            let x = [0.3 * m.vertices()[a][0] + 0.7 * m.vertices()[b][0], 0.3 * m.vertices()[a][1] + 0.7 * m.vertices()[b][1]];
            let ym = y.eval(&m, s.minus, x);
            let yp = y.eval(&m, plus, x);
            let (fm, fp) = (ym[0] * s.normal[0] + ym[1] * s.normal[1], yp[0] * s.normal[0] + yp[1] * s.normal[1]);
            assert!((fm - y.0[i]).abs() < 1e-13 && (fp - y.0[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn p1_functions_reproduce_affines() {
        let m = square(2);
        let p = P1Function(m.vertices().iter().map(|v| 2.0 * v[0] - 3.0 * v[1] + 1.0).collect());
        for t in 0..m.num_elements() {
            assert!(close(p.element_gradient(&m, t), [2.0, -3.0]));
            let c = m.centroid(t);
            assert!((p.eval(&m, t, c) - (2.0 * c[0] - 3.0 * c[1] + 1.0)).abs() < 1e-14);
        }
        let cr = p.to_cr(&m);
        for g in cr.gradient(&m).0 {
            assert!(close(g, [2.0, -3.0]));
        }
    }

    #[test]
    fn ibp_residual_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = square(1);
        for round in 0..4 {
            let v = CrFunction((0..m.num_sides()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let y = RtField((0..m.num_sides()).map(|_| rng.random_range(-1.0..1.0)).collect());
            assert!(discrete_ibp_residual(&m, &v, &y).abs() < 1e-12);
            assert_eq!(discrete_ibp_residual(&m, &CrFunction::zeros(&m), &y), 0.0);
            let n = m.num_elements();
            m = m.rgb_refine(&MarkedSet::new(vec![round % n, (7 * round) % n], n));
        }
    }
}
