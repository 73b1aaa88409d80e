//! Benchmark with known solution on the unit square: a singular corner function
//! `r^{3/2} sin(3 theta / 2)` around `(1/2, 0)`, cut off smoothly by a ninth-order spline.

use std::sync::Arc;

use crate::linalg::DenseMatrix;
use crate::mesh::{DomainSpec, Mesh, MeshError, Point};
use crate::system::ContinuousData;

pub const CENTER: Point = [0.5, 0.0];
pub const CUTOFF: f64 = 0.45;
pub const AMPLITUDE: f64 = -10.0;

/// Ninth-order polynomial on `[0, cutoff]` with `psi(0) = 1`, `psi(cutoff) = 0` and
/// derivatives one to four vanishing at both ends, extended by zero beyond the cutoff.
///
/// With `t = r / cutoff` the polynomial is stored twice: as `1 + sum d_k t^k` and as
/// `sum b_k (t - 1)^k` for `k = 5..=9`. Each form is evaluated on the half of the interval
/// around its expansion point, which avoids cancellation near either end.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePsi {
    pub near_zero: [f64; 5],
    pub near_cutoff: [f64; 5],
    pub cutoff: f64,
}

fn falling(k: usize, i: usize) -> f64 {
    (0..i).map(|j| (k - j) as f64).product()
}

/// Coefficients of `sum_{k=5}^{9} c_k s^k` whose derivatives `0..=4` at `s = at` equal `target`.
fn hermite_solve(at: f64, target: [f64; 5]) -> [f64; 5] {
    let mut a = DenseMatrix::zeros(5);
    for i in 0..5 {
        for (col, k) in (5..10).enumerate() {
            a.set(i, col, falling(k, i) * at.powi((k - i) as i32));
        }
    }
    let mut c = a.lu_solve(&target).expect("Hermite system is nonsingular");
    for _ in 0..2 {
        let ac = a.mul_vec(&c);
        let r: Vec<f64> = target.iter().zip(&ac).map(|(b, x)| b - x).collect();
        let dc = a.lu_solve(&r).expect("Hermite system is nonsingular");
        c.iter_mut().zip(&dc).for_each(|(x, d)| *x += d);
    }
    [c[0], c[1], c[2], c[3], c[4]]
}

fn shifted_derivative(c: &[f64; 5], n: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for k in (5.max(n)..10).rev() {
        acc += c[k - 5] * falling(k, n) * s.powi((k - n) as i32);
    }
    acc
}

impl SplinePsi {
    pub fn build(cutoff: f64) -> Self {
        let near_zero = hermite_solve(1.0, [-1.0, 0.0, 0.0, 0.0, 0.0]);
        let near_cutoff = hermite_solve(-1.0, [1.0, 0.0, 0.0, 0.0, 0.0]);
        Self { near_zero, near_cutoff, cutoff }
    }

    /// `n`-th derivative at `r`.
    pub fn derivative(&self, n: usize, r: f64) -> f64 {
        if r > self.cutoff || r < 0.0 {
            return 0.0;
        }
        let t = r / self.cutoff;
        let dt = if t <= 0.5 {
            let base = if n == 0 { 1.0 } else { 0.0 };
            base + shifted_derivative(&self.near_zero, n, t)
        } else {
            shifted_derivative(&self.near_cutoff, n, t - 1.0)
        };
        dt / self.cutoff.powi(n as i32)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivative(0, r)
    }

    /// Monomial coefficients in `r`.
    pub fn coefficients(&self) -> [f64; 10] {
        let mut c = [0.0; 10];
        c[0] = 1.0;
        for (k, ck) in c.iter_mut().enumerate().skip(5) {
            *ck = self.near_zero[k - 5] / self.cutoff.powi(k as i32);
        }
        c
    }
}

/// Exact primal solution, flux and load of the benchmark.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub psi: SplinePsi,
}

impl Default for ExactSolution {
    fn default() -> Self {
        Self { psi: SplinePsi::build(CUTOFF) }
    }
}

fn polar(x: Point) -> (f64, f64) {
    let (dx, dy) = (x[0] - CENTER[0], x[1] - CENTER[1]);
    (dx.hypot(dy), dy.atan2(dx))
}

impl ExactSolution {
    pub fn u(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        if r == 0.0 || r >= self.psi.cutoff {
            return 0.0;
        }
        AMPLITUDE * self.psi.value(r) * r.powf(1.5) * (1.5 * th).sin()
    }

    /// Gradient of `u`, which is also the exact dual solution.
    pub fn grad_u(&self, x: Point) -> [f64; 2] {
        let (r, th) = polar(x);
        if r == 0.0 || r >= self.psi.cutoff {
            return [0.0, 0.0];
        }
        let (p, dp) = (self.psi.value(r), self.psi.derivative(1, r));
        let w = r.powf(1.5) * (1.5 * th).sin();
        let sr = 1.5 * r.sqrt();
        let grad_w = [sr * (0.5 * th).sin(), sr * (0.5 * th).cos()];
        let grad_r = [th.cos(), th.sin()];
        [
            AMPLITUDE * (dp * w * grad_r[0] + p * grad_w[0]),
            AMPLITUDE * (dp * w * grad_r[1] + p * grad_w[1]),
        ]
    }

    /// Load `f = -laplace u`, using that the singular factor is harmonic.
    pub fn f(&self, x: Point) -> f64 {
        let (r, th) = polar(x);
        if r == 0.0 || r >= self.psi.cutoff {
            return 0.0;
        }
        let (dp, ddp) = (self.psi.derivative(1, r), self.psi.derivative(2, r));
        let w = r.powf(1.5) * (1.5 * th).sin();
        let dr_w = 1.5 * r.sqrt() * (1.5 * th).sin();
        -AMPLITUDE * ((ddp + dp / r) * w + 2.0 * dp * dr_w)
    }

    /// Data with `u_D = 0`, `chi = 0` and no Neumann boundary.
    pub fn continuous_data(&self) -> ContinuousData {
        let me = self.clone();
        ContinuousData {
            f: Arc::new(move |x| me.f(x)),
            g: Arc::new(|_| 0.0),
            u_d: Arc::new(|_| 0.0),
            chi: Arc::new(|_| 0.0),
            resolved: false,
        }
    }
}

/// Two-triangle unit square refined `level` times by red refinement.
pub fn square_mesh(level: usize) -> Result<Mesh, MeshError> {
    let mut mesh = Mesh::build(&DomainSpec::unit_square_contact_bottom())?;
    for _ in 0..level {
        mesh = mesh.red_refine();
    }
    Ok(mesh)
}

/// Experimental orders of convergence between consecutive levels; the first entry and
/// entries involving non-positive values are `None`.
pub fn eoc(values: &[f64], hs: &[f64]) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|k| {
            if k == 0 || values[k] <= 0.0 || values[k - 1] <= 0.0 {
                return None;
            }
            Some((values[k].ln() - values[k - 1].ln()) / (hs[k].ln() - hs[k - 1].ln()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::LineRule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn closed_form(r: f64) -> f64 {
        let t = r / CUTOFF;
        1.0 - 126.0 * t.powi(5) + 420.0 * t.powi(6) - 540.0 * t.powi(7) + 315.0 * t.powi(8) - 70.0 * t.powi(9)
    }

    #[test]
    fn spline_matches_closed_form_smoothstep() {
        let psi = SplinePsi::build(CUTOFF);
        for i in 0..=100 {
            let r = CUTOFF * i as f64 / 100.0;
            assert!((psi.value(r) - closed_form(r)).abs() < 1e-13, "r = {r}");
        }
        assert!((psi.value(0.225) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn spline_hermite_conditions() {
        let psi = SplinePsi::build(CUTOFF);
        assert_eq!(psi.value(0.0), 1.0);
        let end = CUTOFF;
        for i in 1..=4 {
            assert_eq!(psi.derivative(i, 0.0), 0.0);
            let scale = CUTOFF.powi(-(i as i32));
            assert!(psi.derivative(i, end).abs() < 1e-12 * scale.max(1.0), "derivative {i}");
        }
        assert!(psi.value(end).abs() < 1e-12);
    }

    #[test]
    fn spline_is_positive_inside() {
        let psi = SplinePsi::build(CUTOFF);
        assert!((1..10_000).all(|i| psi.value(CUTOFF * i as f64 / 10_000.0) > 0.0));
    }

    #[test]
    fn compact_support() {
        let ex = ExactSolution::default();
        for x in [[0.5, 0.46], [0.0, 0.0], [1.0, 1.0], [0.96, 0.0]] {
            assert_eq!(ex.u(x), 0.0);
            assert_eq!(ex.grad_u(x), [0.0, 0.0]);
            assert_eq!(ex.f(x), 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ex = ExactSolution::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = [rng.random_range(0.1..0.9), rng.random_range(0.01..0.5)];
            let h = 1e-6;
            let g = ex.grad_u(x);
            let gx = (ex.u([x[0] + h, x[1]]) - ex.u([x[0] - h, x[1]])) / (2.0 * h);
            let gy = (ex.u([x[0], x[1] + h]) - ex.u([x[0], x[1] - h])) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-7 * (1.0 + g[0].abs()));
            assert!((g[1] - gy).abs() < 1e-7 * (1.0 + g[1].abs()));
        }
    }

    #[test]
    fn flux_through_small_square_matches_load() {
        let ex = ExactSolution::default();
        let rule = LineRule::gauss(20);
        let tri = crate::quadrature::TriangleRule::collapsed_gauss(20);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = [rng.random_range(0.2..0.8), rng.random_range(0.1..0.4)];
            let d = 0.02;
            let corners = [[c[0] - d, c[1] - d], [c[0] + d, c[1] - d], [c[0] + d, c[1] + d], [c[0] - d, c[1] + d]];
            let mut flux = 0.0;
            for i in 0..4 {
                let (a, b) = (corners[i], corners[(i + 1) % 4]);
                let n = [(b[1] - a[1]) / (2.0 * d), -(b[0] - a[0]) / (2.0 * d)];
                flux += 2.0 * d * rule.segment_mean(a, b, |x| {
                    let g = ex.grad_u(x);
                    g[0] * n[0] + g[1] * n[1]
                });
            }
            let area_half = 2.0 * d * d;
            let load = area_half * tri.mean([corners[0], corners[1], corners[2]], |x| ex.f(x))
                + area_half * tri.mean([corners[0], corners[2], corners[3]], |x| ex.f(x));
            assert!((flux + load).abs() < 1e-8 * (1.0 + load.abs()), "{flux} {load}");
        }
    }

    #[test]
    fn sign_structure_on_contact_boundary() {
        let ex = ExactSolution::default();
        for i in 0..10_000 {
            let x1 = i as f64 / 9_999.0;
            assert!(ex.u([x1, 0.0]) >= 0.0);
            if x1 >= 0.5 {
                assert_eq!(ex.u([x1, 0.0]), 0.0);
                assert!(-ex.grad_u([x1, 0.0])[1] >= 0.0);
            }
        }
    }

    #[test]
    fn eoc_of_power_laws() {
        let hs = [0.5, 0.25, 0.125, 0.0625];
        let sq: Vec<f64> = hs.iter().map(|h| h * h).collect();
        let r = eoc(&sq, &hs);
        assert_eq!(r[0], None);
        assert!(r[1..].iter().all(|e| (e.unwrap() - 2.0).abs() < 1e-12));
        let p: Vec<f64> = hs.iter().map(|h| 3.0 * h.powf(3.7)).collect();
        assert!(eoc(&p, &hs)[1..].iter().all(|e| (e.unwrap() - 3.7).abs() < 1e-12));
        assert_eq!(eoc(&[1.0, 0.0], &[1.0, 0.5])[1], None);
    }
}
