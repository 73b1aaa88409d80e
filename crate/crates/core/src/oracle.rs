//! Reference solver for small contact problems: every active set is tried by solving the
//! equality-constrained saddle point system with a dense LU, and the one satisfying the
//! sign conditions is returned.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::system::SignoriniSystem;

pub const MAX_CONSTRAINTS: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} constraints exceed the enumeration bound of {MAX_CONSTRAINTS}")]
    TooManyConstraints(usize),
    #[error("no active set satisfies the sign conditions")]
    NoConsistentSet,
    #[error("{} active sets satisfy the sign conditions", .0.len())]
    Degenerate(Vec<Vec<bool>>),
    #[error(transparent)]
    Linear(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub u: Vec<f64>,
    /// Multiplier with the same sign convention as the active set iteration (non-positive).
    pub lambda: Vec<f64>,
    pub active: Vec<bool>,
    /// Algebraic energy `U^T S U / 2 - b^T U` of the solution.
    pub energy: f64,
    /// Smallest algebraic energy over all primal feasible candidates.
    pub best_feasible_energy: f64,
}

struct Candidate {
    mask: u32,
    u: Vec<f64>,
    lambda: Vec<f64>,
    feasible: bool,
    consistent: bool,
    energy: f64,
}

/// Solves by enumerating all `2^m` active sets.
pub fn enumerate_solve(system: &SignoriniSystem) -> Result<OracleSolution, OracleError> {
    let m = system.num_constraints();
    if m > MAX_CONSTRAINTS {
        return Err(OracleError::TooManyConstraints(m));
    }
    let n = system.num_dofs();
    let b = system.rhs();
    let scale = 1.0 + b.iter().chain(&system.x).fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * scale;

    let candidates: Vec<Candidate> = (0..1u32 << m)
        .into_par_iter()
        .map(|mask| -> Result<Candidate, OracleError> {
            let rows: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
            let k = n + rows.len();
            let mut a = DenseMatrix::zeros(k);
            for i in 0..n {
                for (j, v) in system.s.row(i) {
                    a.set(i, j, v);
                }
            }
            let mut rhs = b.clone();
            for (r, &j) in rows.iter().enumerate() {
                let (d, l) = (system.contact_dofs[j], system.contact_lengths[j]);
                a.set(d, n + r, l);
                a.set(n + r, d, l);
                rhs.push(system.x[j]);
            }
            let sol = a.lu_solve(&rhs)?;
            let u = sol[..n].to_vec();
            let mut lambda = vec![0.0; m];
            for (r, &j) in rows.iter().enumerate() {
                lambda[j] = sol[n + r];
            }
            let trace = system.contact_trace(&u);
            let feasible = (0..m).all(|j| trace[j] - system.x[j] >= -tol);
            let signs = rows.iter().all(|&j| lambda[j] <= tol);
            let su = system.s.mul_vec(&u);
            let energy = u.iter().zip(&su).zip(&b).map(|((ui, si), bi)| 0.5 * ui * si - bi * ui).sum();
            Ok(Candidate { mask, u, lambda, feasible, consistent: feasible && signs, energy })
        })
        .collect::<Result<_, _>>()?;

    // The parallel collect preserves index order, so the reductions below are deterministic.
    let best_feasible_energy = candidates.iter().filter(|c| c.feasible).map(|c| c.energy).fold(f64::INFINITY, f64::min);
    let consistent: Vec<&Candidate> = candidates.iter().filter(|c| c.consistent).collect();
    let to_bits = |mask: u32| (0..m).map(|j| mask & (1 << j) != 0).collect::<Vec<bool>>();
    match consistent.as_slice() {
        [] => Err(OracleError::NoConsistentSet),
        [c] => Ok(OracleSolution {
            u: c.u.clone(),
            lambda: c.lambda.clone(),
            active: to_bits(c.mask),
            energy: c.energy,
            best_feasible_energy,
        }),
        many => Err(OracleError::Degenerate(many.iter().map(|c| to_bits(c.mask)).collect())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryLabel, DomainSpec, Mesh};
    use crate::pdas::{solve, PdasConfig};
    use crate::quadrature::QuadratureOrder;
    use crate::system::ContinuousData;
    use std::sync::Arc;

    #[test]
    fn no_constraints_gives_linear_solution() {
        let domain = DomainSpec::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![BoundaryLabel::Dirichlet; 4]).unwrap();
        let m = Mesh::build(&domain).unwrap().red_refine();
        let d = ContinuousData::constant(1.0, 0.0, 0.0, 0.0).discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = enumerate_solve(&sys).unwrap();
        assert!(sol.active.is_empty());
        let su = sys.s.mul_vec(&sol.u);
        assert!(su.iter().zip(sys.rhs()).all(|(p, q)| (p - q).abs() < 1e-13));
    }

    #[test]
    fn forced_contact_on_two_triangles() {
        let m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap();
        let d = ContinuousData::constant(0.0, 0.0, 0.0, 0.3).discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = enumerate_solve(&sys).unwrap();
        assert_eq!(sol.active, vec![true]);
        assert!((sol.u[sys.contact_dofs[0]] - 0.3).abs() < 1e-14);
        assert!(sol.energy <= sol.best_feasible_energy + 1e-14);
    }

    #[test]
    fn agrees_with_active_set_iteration() {
        let mut cd = ContinuousData::constant(0.0, 0.0, 0.0, 0.0);
        cd.f = Arc::new(|x| 20.0 * (6.0 * x[0]).sin());
        cd.chi = Arc::new(|x| 0.02 * (x[0] - 0.5));
        let mut m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap();
        for _ in 0..3 {
            m = m.red_refine();
        }
        let d = cd.discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let oracle = enumerate_solve(&sys).unwrap();
        let pdas = solve(&sys, &PdasConfig::default(), None).unwrap();
        assert_eq!(oracle.active, pdas.state.active);
        for (a, b) in oracle.u.iter().zip(&pdas.state.u) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in oracle.lambda.iter().zip(&pdas.state.lambda) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(oracle.energy <= oracle.best_feasible_energy + 1e-12);
    }
}
