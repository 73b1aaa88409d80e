//! Closed-form flux reconstruction, the lifting of piecewise constant fields into the
//! Raviart-Thomas space, primal-dual gap estimators and the strong convexity error measures.

use rand::Rng;
use thiserror::Error;

use crate::manufactured::ExactSolution;
use crate::mesh::{BoundaryLabel, Mesh};
use crate::quadrature::QuadratureOrder;
use crate::spaces::{
    cr_basis_gradient, interpolate_cr, interpolate_rt, CrFunction, P1Function, PwConstant, PwVector, RtField,
    SideConstant,
};
use crate::system::{Condition, ContinuousData, Inadmissible, ProblemData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    /// The residual of the compatibility condition for the basis function of `side`,
    /// divided by the side length. It equals the normal jump of the closed-form field.
    #[error("compatibility fails for the basis function of side {side} (residual {residual:e})")]
    Incompatible { side: usize, residual: f64 },
    #[error("inadmissible argument: {0}")]
    Inadmissible(#[from] Inadmissible),
    #[error("gap routes disagree: definition {definition:e}, decomposition {decomposition:e}")]
    RouteMismatch { definition: f64, decomposition: f64 },
    #[error("obstacle is not resolved by the mesh, so the continuous estimator is unavailable")]
    Unresolved,
}

/// Value of a gap estimator with its split and per-element contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub eta_gap: f64,
    /// Quadratic part `||grad v - y||^2 / 2`.
    pub eta_a: f64,
    /// Contact part `(y . n, v - chi)` on the contact boundary.
    pub eta_b: f64,
    pub local: Vec<f64>,
    pub rho_primal: Option<f64>,
    pub rho_dual: Option<f64>,
}

impl EstimatorReport {
    fn from_parts(local_a: Vec<f64>, local_b: Vec<f64>) -> Self {
        let eta_a = local_a.iter().sum();
        let eta_b = local_b.iter().sum();
        let local = local_a.iter().zip(&local_b).map(|(a, b)| a + b).collect();
        Self { eta_gap: eta_a + eta_b, eta_a, eta_b, local, rho_primal: None, rho_dual: None }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "element,eta2")?;
        for (t, v) in self.local.iter().enumerate() {
            writeln!(out, "{t},{v:.16e}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| format!("{v:.16e}"));
        format!(
            "{{\n  \"eta_gap\": {:.16e},\n  \"eta_a\": {:.16e},\n  \"eta_b\": {:.16e},\n  \"elements\": {},\n  \"rho_primal\": {},\n  \"rho_dual\": {}\n}}",
            self.eta_gap,
            self.eta_a,
            self.eta_b,
            self.local.len(),
            opt(self.rho_primal),
            opt(self.rho_dual)
        )
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn contact_sides(mesh: &Mesh) -> impl Iterator<Item = usize> + '_ {
    mesh.boundary_sides(BoundaryLabel::Contact)
}

/// Normal flux of `ybar - f/2 (x - centroid)` at the midpoint of local side `j` of `t`,
/// measured against the outward normal of `t`.
fn outward_midpoint_flux(mesh: &Mesh, t: usize, j: usize, ybar: [f64; 2], f: f64) -> f64 {
    let s = mesh.side(mesh.element_sides(t)[j]);
    let c = mesh.centroid(t);
    let n = mesh.outward_normal(t, j);
    let y = [ybar[0] - 0.5 * f * (s.midpoint[0] - c[0]), ybar[1] - 0.5 * f * (s.midpoint[1] - c[1])];
    dot(y, n)
}

/// Compatibility residuals (per unit side length) for the basis functions of interior and
/// Neumann sides; zero elsewhere.
pub fn compatibility_residuals(mesh: &Mesh, ybar: &PwVector, f: &PwConstant, g: &SideConstant) -> Vec<f64> {
    let mut r = vec![0.0; mesh.num_sides()];
    for t in 0..mesh.num_elements() {
        let sides = mesh.element_sides(t);
        for j in 0..3 {
            let grad = cr_basis_gradient(mesh, t, j);
            r[sides[j]] += mesh.area(t) * (dot(ybar.0[t], grad) - f.0[t] / 3.0);
        }
    }
    for (i, s) in mesh.sides().iter().enumerate() {
        r[i] = match s.label {
            None => r[i] / s.length,
            Some(BoundaryLabel::Neumann) => r[i] / s.length - g.0[i],
            Some(_) => 0.0,
        };
    }
    r
}

fn closed_form_field(mesh: &Mesh, ybar: &PwVector, f: &PwConstant, g: &SideConstant) -> RtField {
    let mut flux = vec![0.0; mesh.num_sides()];
    for (i, s) in mesh.sides().iter().enumerate() {
        let j = mesh.local_index(s.minus, i);
        let minus = outward_midpoint_flux(mesh, s.minus, j, ybar.0[s.minus], f.0[s.minus]);
        flux[i] = match (s.plus, s.label) {
            (Some(p), _) => {
                let k = mesh.local_index(p, i);
                0.5 * (minus - outward_midpoint_flux(mesh, p, k, ybar.0[p], f.0[p]))
            }
            (None, Some(BoundaryLabel::Neumann)) => g.0[i],
            (None, _) => minus,
        };
    }
    RtField(flux)
}

/// Lifts a piecewise constant field into the Raviart-Thomas space with element means
/// `ybar`, divergence `-f` and normal flux `g` on the Neumann boundary, provided the
/// compatibility condition holds for every Crouzeix-Raviart test function vanishing on the
/// Dirichlet and contact boundary.
pub fn lift(mesh: &Mesh, ybar: &PwVector, f: &PwConstant, g: &SideConstant) -> Result<RtField, DualityError> {
    let scale = ybar.0.iter().flat_map(|v| v.iter()).chain(&f.0).chain(&g.0).fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * (1.0 + scale);
    let residuals = compatibility_residuals(mesh, ybar, f, g);
    let (side, residual) = residuals
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bs, br), (s, &r)| if r.abs() > br.abs() { (s, r) } else { (bs, br) });
    if residual.abs() > tol {
        return Err(DualityError::Incompatible { side, residual });
    }
    Ok(closed_form_field(mesh, ybar, f, g))
}

/// Discrete dual solution `grad_h u - f_h/2 (x - centroid)` from the discrete primal
/// solution. Fails if the normal fluxes do not match across sides, which signals that `u`
/// is not the solution.
pub fn reconstruct_flux(data: &ProblemData, u: &CrFunction) -> Result<RtField, DualityError> {
    let mesh = &data.mesh;
    let ybar = u.gradient(mesh);
    let residuals = compatibility_residuals(mesh, &ybar, &data.f, &data.g);
    let (side, residual) = residuals
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bs, br), (s, &r)| if r.abs() > br.abs() { (s, r) } else { (bs, br) });
    let grad_scale = ybar.0.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if residual.abs() > 1e-10 * (1.0 + data.scale() + grad_scale) {
        return Err(DualityError::Incompatible { side, residual });
    }
    Ok(closed_form_field(mesh, &ybar, &data.f, &data.g))
}

fn discrete_parts(data: &ProblemData, v: &CrFunction, y: &RtField) -> EstimatorReport {
    let m = &data.mesh;
    let gv = v.gradient(m);
    let py = y.element_means(m);
    let local_a: Vec<f64> = (0..m.num_elements())
        .map(|t| {
            let d = [gv.0[t][0] - py.0[t][0], gv.0[t][1] - py.0[t][1]];
            0.5 * m.area(t) * dot(d, d)
        })
        .collect();
    let mut local_b = vec![0.0; m.num_elements()];
    for s in contact_sides(m) {
        let side = m.side(s);
        local_b[side.minus] += side.length * y.0[s] * (v.0[s] - data.chi.0[s]);
    }
    EstimatorReport::from_parts(local_a, local_b)
}

/// Discrete primal-dual gap `I_h(v) - D_h(y)` of an admissible pair, computed both from
/// the energies and from its split into a quadratic and a contact part.
pub fn discrete_gap(data: &ProblemData, v: &CrFunction, y: &RtField) -> Result<EstimatorReport, DualityError> {
    let definition = data.primal_energy(v)? - data.dual_energy(y)?;
    let report = discrete_parts(data, v, y);
    let energies = data.primal_energy_unchecked(v).abs() + data.dual_energy_unchecked(y).abs();
    if (definition - report.eta_gap).abs() > 1e-10 * (1.0 + energies) {
        return Err(DualityError::RouteMismatch { definition, decomposition: report.eta_gap });
    }
    Ok(report)
}

/// `I_h(v) - D_h(y)` without admissibility checks.
pub fn discrete_gap_by_definition(data: &ProblemData, v: &CrFunction, y: &RtField) -> f64 {
    data.primal_energy_unchecked(v) - data.dual_energy_unchecked(y)
}

/// The two discrete strong convexity measures of a pair relative to the discrete solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalError {
    pub rho_primal: f64,
    pub rho_dual: f64,
}

impl TotalError {
    pub fn total(&self) -> f64 {
        self.rho_primal + self.rho_dual
    }
}

/// Strong convexity measures from their closed forms, without admissibility checks.
pub fn discrete_total_error_unchecked(
    data: &ProblemData,
    v: &CrFunction,
    y: &RtField,
    u: &CrFunction,
    z: &RtField,
) -> TotalError {
    let m = &data.mesh;
    let (gv, gu) = (v.gradient(m), u.gradient(m));
    let (py, pz) = (y.element_means(m), z.element_means(m));
    let mut rho_primal = 0.0;
    let mut rho_dual = 0.0;
    for t in 0..m.num_elements() {
        let a = [gv.0[t][0] - gu.0[t][0], gv.0[t][1] - gu.0[t][1]];
        let b = [py.0[t][0] - pz.0[t][0], py.0[t][1] - pz.0[t][1]];
        rho_primal += 0.5 * m.area(t) * dot(a, a);
        rho_dual += 0.5 * m.area(t) * dot(b, b);
    }
    for s in contact_sides(m) {
        let l = m.side(s).length;
        rho_primal += l * z.0[s] * (v.0[s] - data.chi.0[s]);
        rho_dual += l * y.0[s] * (u.0[s] - data.chi.0[s]);
    }
    TotalError { rho_primal, rho_dual }
}

/// Strong convexity measures of an admissible pair relative to the discrete solution pair
/// `(u, z)`, cross-checked against the energy differences `I_h(v) - I_h(u)` and
/// `D_h(z) - D_h(y)`.
pub fn discrete_total_error(
    data: &ProblemData,
    v: &CrFunction,
    y: &RtField,
    u: &CrFunction,
    z: &RtField,
) -> Result<TotalError, DualityError> {
    let iv = data.primal_energy(v)?;
    let dy = data.dual_energy(y)?;
    let iu = data.primal_energy(u)?;
    let dz = data.dual_energy(z)?;
    let e = discrete_total_error_unchecked(data, v, y, u, z);
    let tol = 1e-10 * (1.0 + iv.abs() + iu.abs() + dy.abs() + dz.abs());
    if (iv - iu - e.rho_primal).abs() > tol {
        return Err(DualityError::RouteMismatch { definition: iv - iu, decomposition: e.rho_primal });
    }
    if (dz - dy - e.rho_dual).abs() > tol {
        return Err(DualityError::RouteMismatch { definition: dz - dy, decomposition: e.rho_dual });
    }
    Ok(e)
}

/// Primal-dual gap of a conforming pair: `v` continuous piecewise affine, `y` a
/// Raviart-Thomas field, evaluated with local indicators
/// `||grad v - y||^2_T / 2 + (y . n, v - chi)` on the contact sides of `T`.
pub fn continuous_gap(
    data: &ProblemData,
    continuous: &ContinuousData,
    v: &P1Function,
    y: &RtField,
    quad: QuadratureOrder,
) -> Result<EstimatorReport, DualityError> {
    if !continuous.resolved {
        return Err(DualityError::Unresolved);
    }
    let m = &data.mesh;
    data.check_admissible_dual(y)?;
    let tau = data.tau_adm();
    for (s, side) in m.sides().iter().enumerate() {
        for &p in &side.vertices {
            let x = m.vertices()[p];
            let magnitude = match side.label {
                Some(BoundaryLabel::Dirichlet) => (v.0[p] - (continuous.u_d)(x)).abs(),
                Some(BoundaryLabel::Contact) => (continuous.chi)(x) - v.0[p],
                _ => continue,
            };
            if magnitude > tau {
                let condition = match side.label {
                    Some(BoundaryLabel::Dirichlet) => Condition::Dirichlet,
                    _ => Condition::Obstacle,
                };
                return Err(Inadmissible { condition, index: s, magnitude }.into());
            }
        }
    }
    let tri_rule = quad.triangle_rule();
    let local_a: Vec<f64> = (0..m.num_elements())
        .map(|t| {
            let gv = v.element_gradient(m, t);
            let mean = tri_rule.mean(m.element_points(t), |x| {
                let yx = y.eval(m, t, x);
                let d = [gv[0] - yx[0], gv[1] - yx[1]];
                dot(d, d)
            });
            0.5 * m.area(t) * mean
        })
        .collect();
    let line_rule = quad.line_rule();
    let mut local_b = vec![0.0; m.num_elements()];
    for s in contact_sides(m) {
        let side = m.side(s);
        let [a, b] = side.vertices;
        let (pa, pb) = (m.vertices()[a], m.vertices()[b]);
        let chi_mean = line_rule.segment_mean(pa, pb, &*continuous.chi);
        let gap = 0.5 * (v.0[a] + v.0[b]) - chi_mean;
        local_b[side.minus] += side.length * y.0[s] * gap;
    }
    Ok(EstimatorReport::from_parts(local_a, local_b))
}

/// Error quantities of the quasi-interpolants of an exact solution pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriErrors {
    /// `rho_tot` of the interpolated pair from the closed-form strong convexity measures.
    pub e_tot: f64,
    /// `I_h - D_h` of the interpolated pair.
    pub e_gap: f64,
    pub e_delta: f64,
    /// Largest `|div y + f_h|` of the interpolated flux, the quadrature defect that makes
    /// `e_delta` nonzero.
    pub divergence_defect: f64,
}

/// Errors of `(Pi^cr u, Pi^rt grad u)` against the discrete solutions `(u_h, z_h)`.
/// The interpolants must satisfy the primal constraints and the dual sign and Neumann
/// conditions; the dual divergence constraint only holds up to quadrature.
pub fn apriori_errors(
    data: &ProblemData,
    exact: &ExactSolution,
    u_h: &CrFunction,
    z_h: &RtField,
    quad: QuadratureOrder,
) -> Result<AprioriErrors, DualityError> {
    let m = &data.mesh;
    let v = interpolate_cr(m, quad, |x| exact.u(x));
    let y = interpolate_rt(m, quad, |x| exact.grad_u(x));
    data.check_admissible_primal(&v)?;
    for (s, side) in m.sides().iter().enumerate() {
        let (condition, magnitude) = match side.label {
            Some(BoundaryLabel::Neumann) => (Condition::NeumannFlux, (y.0[s] - data.g.0[s]).abs()),
            Some(BoundaryLabel::Contact) => (Condition::ContactSign, -y.0[s]),
            _ => continue,
        };
        if magnitude > data.tau_adm() {
            return Err(Inadmissible { condition, index: s, magnitude }.into());
        }
    }
    let divergence_defect =
        (0..m.num_elements()).map(|t| (y.element_divergence(m, t) + data.f.0[t]).abs()).fold(0.0, f64::max);
    let e_tot = discrete_total_error_unchecked(data, &v, &y, u_h, z_h).total();
    let e_gap = discrete_gap_by_definition(data, &v, &y);
    Ok(AprioriErrors { e_tot, e_gap, e_delta: (e_tot - e_gap).abs(), divergence_defect })
}

/// Random admissible Crouzeix-Raviart function near `base`: perturbed by at most
/// `amplitude` on free sides, clipped to the obstacle on contact sides (roughly a quarter
/// of them exactly in contact) and equal to the Dirichlet data.
pub fn random_admissible_primal<R: Rng>(data: &ProblemData, base: &CrFunction, amplitude: f64, rng: &mut R) -> CrFunction {
    let m = &data.mesh;
    CrFunction(
        m.sides()
            .iter()
            .enumerate()
            .map(|(s, side)| match side.label {
                Some(BoundaryLabel::Dirichlet) => data.u_d.0[s],
                Some(BoundaryLabel::Contact) => {
                    if rng.random_bool(0.25) {
                        data.chi.0[s]
                    } else {
                        (base.0[s] + amplitude * rng.random_range(-1.0..1.0)).max(data.chi.0[s])
                    }
                }
                _ => base.0[s] + amplitude * rng.random_range(-1.0..1.0),
            })
            .collect(),
    )
}

/// Normal fluxes of `curl psi = (d2 psi, -d1 psi)` for a continuous piecewise affine
/// stream function. The result is divergence free.
pub fn curl_field(mesh: &Mesh, psi: &P1Function) -> RtField {
    RtField(
        mesh.sides()
            .iter()
            .map(|s| {
                let [a, b] = s.vertices;
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                // The tangent (-n2, n1) decides which endpoint comes last.
                let along = (pb[0] - pa[0]) * -s.normal[1] + (pb[1] - pa[1]) * s.normal[0];
                let diff = psi.0[b] - psi.0[a];
                if along > 0.0 { diff / s.length } else { -diff / s.length }
            })
            .collect(),
    )
}

/// Random admissible Raviart-Thomas field near an admissible `base`: a divergence-free
/// perturbation that leaves Neumann fluxes unchanged and keeps contact fluxes non-negative.
pub fn random_admissible_dual<R: Rng>(data: &ProblemData, base: &RtField, amplitude: f64, rng: &mut R) -> RtField {
    let m = &data.mesh;
    let mut pinned = vec![false; m.num_vertices()];
    let mut on_contact = vec![false; m.num_vertices()];
    for s in m.sides() {
        match s.label {
            Some(BoundaryLabel::Neumann) => s.vertices.iter().for_each(|&p| pinned[p] = true),
            Some(BoundaryLabel::Contact) => s.vertices.iter().for_each(|&p| on_contact[p] = true),
            _ => {}
        }
    }
    let mut free = vec![0.0; m.num_vertices()];
    let mut contact = vec![0.0; m.num_vertices()];
    for p in 0..m.num_vertices() {
        let value = amplitude * rng.random_range(-1.0..1.0);
        if pinned[p] {
            continue;
        }
        if on_contact[p] {
            contact[p] = value;
        } else {
            free[p] = value;
        }
    }
    // Contact vertices only touch contact sides through the free part; scale the contact
    // part so that the contact fluxes stay non-negative.
    let dc = curl_field(m, &P1Function(contact.clone()));
    let df = curl_field(m, &P1Function(free));
    let mut factor = 1.0f64;
    for s in contact_sides(m) {
        let b = base.0[s] + df.0[s];
        if dc.0[s] < 0.0 {
            factor = factor.min((b.max(0.0) / -dc.0[s]).max(0.0));
        }
    }
    RtField(base.0.iter().zip(&df.0).zip(&dc.0).map(|((b, f), c)| b + f + factor * c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainSpec;
    use crate::pdas::{solve, PdasConfig};
    use crate::system::SignoriniSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn problem(levels: usize) -> (ProblemData, CrFunction, RtField) {
        let mut cd = ContinuousData::constant(0.0, 0.5, 0.0, 0.0);
        cd.f = Arc::new(|x| 8.0 * (5.0 * x[0]).sin() - 3.0);
        cd.chi = Arc::new(|x| 0.05 * (x[0] - 0.4));
        let domain = DomainSpec::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![BoundaryLabel::Contact, BoundaryLabel::Neumann, BoundaryLabel::Dirichlet, BoundaryLabel::Neumann],
        )
        .unwrap();
        let mut m = Mesh::build(&domain).unwrap();
        for _ in 0..levels {
            m = m.red_refine();
        }
        let d = cd.discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = solve(&sys, &PdasConfig::default(), None).unwrap();
        let z = reconstruct_flux(&d, &sol.u).unwrap();
        (d, sol.u, z)
    }

    #[test]
    fn reconstruction_is_a_dual_solution() {
        let (d, u, z) = problem(3);
        d.check_admissible_dual(&z).unwrap();
        let pz = z.element_means(&d.mesh);
        for (a, b) in pz.0.iter().zip(u.gradient(&d.mesh).0) {
            assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
        }
        let iu = d.primal_energy(&u).unwrap();
        let dz = d.dual_energy(&z).unwrap();
        assert!((iu - dz).abs() < 1e-11 * (1.0 + iu.abs()));
        for s in d.mesh.boundary_sides(BoundaryLabel::Contact) {
            assert!((z.0[s] * (u.0[s] - d.chi.0[s])).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_rejects_non_solutions() {
        let (d, mut u, _) = problem(2);
        let s = d.mesh.sides().iter().position(|s| s.label.is_none()).unwrap();
        u.0[s] += 0.1;
        assert!(matches!(reconstruct_flux(&d, &u), Err(DualityError::Incompatible { .. })));
    }

    #[test]
    fn zero_load_gives_piecewise_constant_field() {
        let domain = DomainSpec::unit_square_contact_bottom();
        let m = Mesh::build(&domain).unwrap().red_refine();
        let p = P1Function(m.vertices().iter().map(|v| v[0] - 2.0 * v[1]).collect());
        let u = p.to_cr(&m);
        let ybar = u.gradient(&m);
        let zero = PwConstant(vec![0.0; m.num_elements()]);
        let g = SideConstant(vec![0.0; m.num_sides()]);
        let y = lift(&m, &ybar, &zero, &g).unwrap();
        for t in 0..m.num_elements() {
            for x in m.element_points(t) {
                let v = y.eval(&m, t, x);
                assert!((v[0] - 1.0).abs() < 1e-13 && (v[1] + 2.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_triangle_divergence() {
        let mut sides = std::collections::HashMap::new();
        for e in [[0, 1], [1, 2], [0, 2]] {
            sides.insert(e, BoundaryLabel::Dirichlet);
        }
        let m = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &sides).unwrap();
        let y = closed_form_field(
            &m,
            &PwVector(vec![[0.3, -0.7]]),
            &PwConstant(vec![2.5]),
            &SideConstant(vec![0.0; 3]),
        );
        assert!((y.element_divergence(&m, 0) + 2.5).abs() < 1e-14);
        let c = y.eval(&m, 0, m.centroid(0));
        assert!((c[0] - 0.3).abs() < 1e-14 && (c[1] + 0.7).abs() < 1e-14);
    }

    #[test]
    fn lift_rejects_incompatible_fields() {
        let (d, u, _) = problem(2);
        let mut ybar = u.gradient(&d.mesh);
        ybar.0[3][0] += 1e-3;
        assert!(matches!(lift(&d.mesh, &ybar, &d.f, &d.g), Err(DualityError::Incompatible { .. })));
        let ok = lift(&d.mesh, &u.gradient(&d.mesh), &d.f, &d.g).unwrap();
        let z = reconstruct_flux(&d, &u).unwrap();
        assert_eq!(ok, z);
    }

    #[test]
    fn solution_pair_has_zero_gap() {
        let (d, u, z) = problem(3);
        let r = discrete_gap(&d, &u, &z).unwrap();
        assert!(r.eta_gap.abs() < 1e-11 * (1.0 + d.scale()));
        let e = discrete_total_error(&d, &u, &z, &u, &z).unwrap();
        assert!(e.total().abs() < 1e-12);
    }

    #[test]
    fn gap_identity_for_random_pairs() {
        let (d, u, z) = problem(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v = random_admissible_primal(&d, &u, 0.1, &mut rng);
            let y = random_admissible_dual(&d, &z, 0.1, &mut rng);
            d.check_admissible_primal(&v).unwrap();
            d.check_admissible_dual(&y).unwrap();
            let gap = discrete_gap(&d, &v, &y).unwrap();
            let tot = discrete_total_error(&d, &v, &y, &u, &z).unwrap();
            assert!((gap.eta_gap - tot.total()).abs() <= 1e-11 * (1.0 + gap.eta_gap));
            assert!(gap.eta_b >= -d.tau_adm());
            let sum: f64 = gap.local.iter().sum();
            assert!((sum - gap.eta_gap).abs() <= 1e-12 * gap.eta_gap.abs().max(1e-300));
        }
    }

    #[test]
    fn primal_perturbation_only_changes_primal_measure() {
        let (d, u, z) = problem(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_admissible_primal(&d, &u, 0.05, &mut rng);
        let gap = discrete_gap(&d, &v, &z).unwrap();
        let tot = discrete_total_error(&d, &v, &z, &u, &z).unwrap();
        assert!(tot.rho_dual.abs() < 1e-14);
        let rho = d.primal_energy(&v).unwrap() - d.primal_energy(&u).unwrap();
        assert!((gap.eta_gap - rho).abs() < 1e-12 * (1.0 + rho));
    }

    #[test]
    fn curl_fields_are_divergence_free() {
        let m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap().red_refine().red_refine();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = P1Function((0..m.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = curl_field(&m, &psi);
        for t in 0..m.num_elements() {
            assert!(y.element_divergence(&m, t).abs() < 1e-12);
            let g = psi.element_gradient(&m, t);
            let c = y.eval(&m, t, m.centroid(t));
            assert!((c[0] - g[1]).abs() < 1e-12 && (c[1] + g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_gap_of_exact_affine_pair_vanishes() {
        let cd = ContinuousData::constant(0.0, 0.0, 0.0, 0.0);
        let domain = DomainSpec::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![BoundaryLabel::Contact, BoundaryLabel::Dirichlet, BoundaryLabel::Dirichlet, BoundaryLabel::Dirichlet],
        )
        .unwrap();
        let m = Mesh::build(&domain).unwrap().red_refine();
        let d = cd.discretize(m, QuadratureOrder::default());
        let v = P1Function(vec![0.0; d.mesh.num_vertices()]);
        let y = RtField::zeros(&d.mesh);
        let r = continuous_gap(&d, &cd, &v, &y, QuadratureOrder::uniform(4)).unwrap();
        assert_eq!(r.eta_gap, 0.0);
    }

    #[test]
    fn summary_lists_fields() {
        let r = EstimatorReport::from_parts(vec![1.0, 2.0], vec![0.5, 0.0]);
        assert_eq!(r.eta_gap, 3.5);
        assert!(r.summary().contains("\"eta_b\": 5.0"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
