//! Gauss rules on the unit interval and collapsed Gauss rules on triangles.

use crate::mesh::Point;

/// Quadrature rule on `[0, 1]`; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// `n`-point Gauss-Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    /// Mean of `f` over the segment `a`-`b`.
    pub fn segment_mean(&self, a: Point, b: Point, mut f: impl FnMut(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
            .sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Quadrature rule on a triangle in barycentric coordinates; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed `n x n` Gauss rule, exact for polynomials of degree `2n - 2`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let g = LineRule::gauss(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&s, &ws) in g.points.iter().zip(&g.weights) {
            for (&t, &wt) in g.points.iter().zip(&g.weights) {
                let (l1, l2) = (s * (1.0 - t), s * t);
                points.push([1.0 - l1 - l2, l1, l2]);
                weights.push(2.0 * ws * wt * s);
            }
        }
        Self { points, weights }
    }

    /// Mean of `f` over the triangle with vertices `p`.
    pub fn mean(&self, p: [Point; 3], mut f: impl FnMut(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(l, &w)| {
                let x = [
                    l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                    l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                ];
                w * f(x)
            })
            .sum()
    }
}

/// Rule sizes used when integrating non-polynomial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureOrder {
    /// Gauss points per side.
    pub side: usize,
    /// Gauss points per direction of the collapsed element rule.
    pub element: usize,
}

impl Default for QuadratureOrder {
    fn default() -> Self {
        Self { side: 8, element: 4 }
    }
}

impl QuadratureOrder {
    pub fn uniform(n: usize) -> Self {
        Self { side: n, element: n }
    }

    pub fn line_rule(&self) -> LineRule {
        LineRule::gauss(self.side)
    }

    pub fn triangle_rule(&self) -> TriangleRule {
        TriangleRule::collapsed_gauss(self.element)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for n in 1..=12 {
            let rule = LineRule::gauss(n);
            for k in 0..2 * n {
                let q: f64 = rule.points.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn gauss_points_are_sorted_and_interior() {
        let rule = LineRule::gauss(9);
        assert!(rule.points.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.points.iter().all(|&x| x > 0.0 && x < 1.0));
        assert!((rule.points[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_integrates_monomials() {
        // Mean over the reference triangle of x^a y^b is 2 a! b! / (a + b + 2)!.
        let fact = |k: u32| (1..=k).product::<u32>() as f64;
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for n in 1..=6 {
            let rule = TriangleRule::collapsed_gauss(n);
            for a in 0..=(2 * n as u32 - 2) {
                for b in 0..=(2 * n as u32 - 2 - a) {
                    let q = rule.mean(tri, |x| x[0].powi(a as i32) * x[1].powi(b as i32));
                    let exact = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
                    assert!((q - exact).abs() < 1e-14, "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn segment_mean_of_square() {
        let rule = LineRule::gauss(8);
        let m = rule.segment_mean([0.0, 0.0], [1.0, 0.0], |x| x[0] * x[0]);
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
    }
}
