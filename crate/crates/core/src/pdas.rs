//! Primal-dual active set (semi-smooth Newton) iteration for the discrete contact problem.
//!
//! The multiplier `Lambda` enters as `S U + p Lambda = P F + G` and is non-positive at the
//! solution; the physical contact multiplier is `-Lambda`.

use std::collections::HashSet;

use thiserror::Error;

use crate::linalg::{pcg, CsrMatrix, LinalgError, SolverKind, SparseCholesky};
use crate::spaces::{CrFunction, SideConstant};
use crate::system::SignoriniSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdasConfig {
    pub alpha: f64,
    /// Stop once `|U^k - U^{k-1}|_inf <= eps_stop`; a repeated active set also stops.
    pub eps_stop: f64,
    pub max_iters: usize,
    pub solver: SolverKind,
}

impl Default for PdasConfig {
    fn default() -> Self {
        Self { alpha: 1.0, eps_stop: 0.0, max_iters: 100, solver: SolverKind::Cholesky }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdasState {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
}

impl PdasState {
    pub fn zeros(system: &SignoriniSystem) -> Self {
        Self {
            u: vec![0.0; system.num_dofs()],
            lambda: vec![0.0; system.num_constraints()],
            active: vec![false; system.num_constraints()],
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub active: usize,
    pub step: f64,
    pub stationarity: f64,
    pub infeasibility: f64,
    pub complementarity: f64,
    pub energy: f64,
}

#[derive(Debug, Error)]
pub enum PdasError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("linear solve failed: {0}")]
    Linear(#[from] LinalgError),
    #[error("no convergence within {} iterations", .0.iterations)]
    MaxIterations(Box<PdasState>),
    #[error("active set cycles: set of iteration {iteration} reappeared")]
    Cycling { iteration: usize, state: Box<PdasState> },
}

/// Converged iterate with the physical multiplier and the iteration log.
#[derive(Debug, Clone)]
pub struct PdasSolution {
    pub u: CrFunction,
    /// `-Lambda` on contact sides, zero elsewhere.
    pub multiplier: SideConstant,
    pub state: PdasState,
    pub log: Vec<IterationRecord>,
}

/// Constraint rows with `Lambda + alpha (p^T U - X) < 0`.
pub fn active_set(state: &PdasState, system: &SignoriniSystem, alpha: f64) -> Vec<bool> {
    let trace = system.contact_trace(&state.u);
    (0..system.num_constraints()).map(|j| state.lambda[j] + alpha * (trace[j] - system.x[j]) < 0.0).collect()
}

/// Reusable linear solver for the stiffness matrix with some dofs pinned.
pub struct PinnedSolver<'a> {
    system: &'a SignoriniSystem,
    kind: SolverKind,
    chol: Option<SparseCholesky>,
    b: Vec<f64>,
}

impl<'a> PinnedSolver<'a> {
    pub fn new(system: &'a SignoriniSystem, kind: SolverKind) -> Self {
        let chol = matches!(kind, SolverKind::Cholesky).then(|| SparseCholesky::analyze(&system.s));
        Self { system, kind, chol, b: system.rhs() }
    }

    /// Solves the Newton system for the active set: active contact dofs are pinned to the
    /// obstacle and the multipliers of inactive rows vanish.
    pub fn step(&mut self, active: &[bool], warm: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
        let sys = self.system;
        let n = sys.num_dofs();
        let mut pinned = vec![false; n];
        let mut value = vec![0.0; n];
        for j in (0..sys.num_constraints()).filter(|&j| active[j]) {
            pinned[sys.contact_dofs[j]] = true;
            value[sys.contact_dofs[j]] = sys.obstacle(j);
        }
        let a = sys.s.with_identity_rows(&pinned);
        let mut rhs = self.b.clone();
        for i in 0..n {
            if pinned[i] {
                rhs[i] = value[i];
            } else {
                rhs[i] -= sys.s.row(i).filter(|&(j, _)| pinned[j]).map(|(j, v)| v * value[j]).sum::<f64>();
            }
        }
        let u = self.solve(&a, &rhs, warm)?;
        let su = sys.s.mul_vec(&u);
        let lambda = (0..sys.num_constraints())
            .map(|j| {
                if active[j] {
                    let d = sys.contact_dofs[j];
                    (self.b[d] - su[d]) / sys.contact_lengths[j]
                } else {
                    0.0
                }
            })
            .collect();
        Ok((u, lambda))
    }

    fn solve(&mut self, a: &CsrMatrix, rhs: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>, LinalgError> {
        match (self.kind, self.chol.as_mut()) {
            (SolverKind::Cholesky, Some(chol)) => {
                chol.refactor(a)?;
                Ok(chol.solve(rhs))
            }
            (SolverKind::Cg { tol, max_iter }, _) => Ok(pcg(a, rhs, warm, tol, max_iter)?.solution),
            (SolverKind::Cholesky, None) => unreachable!("analysis is created with the solver"),
        }
    }
}

/// Stationarity, primal infeasibility and complementarity residuals (max norms).
pub fn kkt_residuals(system: &SignoriniSystem, u: &[f64], lambda: &[f64]) -> (f64, f64, f64) {
    let b = system.rhs();
    let su = system.s.mul_vec(u);
    let pl = system.apply_p(lambda);
    let stationarity = (0..u.len()).map(|i| (su[i] + pl[i] - b[i]).abs()).fold(0.0, f64::max);
    let trace = system.contact_trace(u);
    let gap: Vec<f64> = trace.iter().zip(&system.x).map(|(t, x)| t - x).collect();
    let infeasibility = gap.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max);
    let complementarity = gap.iter().zip(lambda).map(|(g, l)| (g * l).abs()).fold(0.0, f64::max);
    (stationarity, infeasibility, complementarity)
}

/// Algebraic energy `U^T S U / 2 - b^T U`, equal to the discrete primal energy up to a
/// constant fixed by the Dirichlet data.
fn algebraic_energy(system: &SignoriniSystem, u: &[f64]) -> f64 {
    let su = system.s.mul_vec(u);
    let b = system.rhs();
    u.iter().zip(&su).zip(&b).map(|((ui, si), bi)| 0.5 * ui * si - bi * ui).sum()
}

/// Runs the iteration from `initial` (or from zero).
pub fn solve(system: &SignoriniSystem, config: &PdasConfig, initial: Option<PdasState>) -> Result<PdasSolution, PdasError> {
    if config.alpha.is_nan() || config.alpha <= 0.0 {
        return Err(PdasError::Config("alpha must be positive"));
    }
    if config.eps_stop.is_nan() || config.eps_stop < 0.0 {
        return Err(PdasError::Config("eps_stop must be non-negative"));
    }
    let mut solver = PinnedSolver::new(system, config.solver);
    let mut state = initial.unwrap_or_else(|| PdasState::zeros(system));
    state.iterations = 0;
    let mut previous: Option<Vec<bool>> = None;
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut log = Vec::new();
    loop {
        let active = active_set(&state, system, config.alpha);
        if previous.as_ref() == Some(&active) {
            break;
        }
        if !seen.insert(active.clone()) {
            return Err(PdasError::Cycling { iteration: state.iterations, state: Box::new(state) });
        }
        if state.iterations >= config.max_iters {
            return Err(PdasError::MaxIterations(Box::new(state)));
        }
        let (u, lambda) = solver.step(&active, Some(&state.u))?;
        let step = u.iter().zip(&state.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (stationarity, infeasibility, complementarity) = kkt_residuals(system, &u, &lambda);
        state = PdasState { u, lambda, active: active.clone(), iterations: state.iterations + 1 };
        log.push(IterationRecord {
            k: state.iterations,
            active: active.iter().filter(|&&a| a).count(),
            step,
            stationarity,
            infeasibility,
            complementarity,
            energy: algebraic_energy(system, &state.u),
        });
        previous = Some(active);
        if step <= config.eps_stop && state.iterations > 1 {
            break;
        }
    }
    let u = system.to_cr(&state.u);
    let mut multiplier = vec![0.0; u.0.len()];
    for (j, &s) in system.contact_sides.iter().enumerate() {
        multiplier[s] = -state.lambda[j];
    }
    Ok(PdasSolution { u, multiplier: SideConstant(multiplier), state, log })
}

/// Writes the iteration log as CSV.
pub fn write_log<W: std::io::Write>(log: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,active,step,stationarity,infeasibility,complementarity,energy")?;
    for r in log {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.k, r.active, r.step, r.stationarity, r.infeasibility, r.complementarity, r.energy
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryLabel, DomainSpec, Mesh};
    use crate::quadrature::QuadratureOrder;
    use crate::system::{ContinuousData, ProblemData};
    use std::sync::Arc;

    fn data(levels: usize, f: f64, chi: f64) -> ProblemData {
        let mut m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap();
        for _ in 0..levels {
            m = m.red_refine();
        }
        ContinuousData::constant(f, 0.0, 0.0, chi).discretize(m, QuadratureOrder::default())
    }

    #[test]
    fn active_set_sign_test() {
        let d = data(1, 0.0, 0.0);
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let mut state = PdasState::zeros(&sys);
        assert_eq!(active_set(&state, &sys, 1.0), vec![false, false]);
        let (d0, d1) = (sys.contact_dofs[0], sys.contact_dofs[1]);
        state.u[d0] = -1.0 / sys.contact_lengths[0];
        state.u[d1] = 1.0 / sys.contact_lengths[1];
        assert_eq!(active_set(&state, &sys, 1.0), vec![true, false]);
    }

    #[test]
    fn without_contact_a_single_linear_solve() {
        let domain = DomainSpec::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![BoundaryLabel::Dirichlet; 4],
        )
        .unwrap();
        let m = Mesh::build(&domain).unwrap().red_refine().red_refine();
        let d = ContinuousData::constant(1.0, 0.0, 0.0, 0.0).discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = solve(&sys, &PdasConfig::default(), None).unwrap();
        assert_eq!(sol.state.iterations, 1);
        let su = sys.s.mul_vec(&sol.state.u);
        let b = sys.rhs();
        assert!(su.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-13));
    }

    #[test]
    fn never_active_obstacle() {
        let d = data(3, 1.0, -100.0);
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = solve(&sys, &PdasConfig::default(), None).unwrap();
        assert!(sol.state.active.iter().all(|a| !a));
        assert!(sol.multiplier.0.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn fully_active_obstacle() {
        // A downward load pushes the membrane onto an obstacle lying above zero.
        let d = data(3, -5.0, 0.2);
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = solve(&sys, &PdasConfig::default(), None).unwrap();
        assert!(sol.state.active.iter().all(|&a| a));
        for &s in &sys.contact_sides {
            assert!((sol.u.0[s] - 0.2).abs() < 1e-14);
            assert!(sol.multiplier.0[s] > 0.0);
        }
    }

    #[test]
    fn kkt_conditions_and_alpha_invariance() {
        let mut cd = ContinuousData::constant(0.0, 0.0, 0.0, 0.0);
        cd.f = Arc::new(|x| if x[0] < 0.5 { 8.0 } else { -8.0 });
        cd.chi = Arc::new(|x| 0.05 * (x[0] - 0.3));
        let mut m = Mesh::build(&DomainSpec::unit_square_contact_bottom()).unwrap();
        for _ in 0..4 {
            m = m.red_refine();
        }
        let d = cd.discretize(m, QuadratureOrder::default());
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let reference = solve(&sys, &PdasConfig::default(), None).unwrap();
        let (st, inf, comp) = kkt_residuals(&sys, &reference.state.u, &reference.state.lambda);
        assert!(st < 1e-12 && inf < 1e-12 && comp < 1e-12, "{st} {inf} {comp}");
        assert!(reference.state.lambda.iter().all(|&l| l <= 1e-12));
        let some_active = reference.state.active.iter().any(|&a| a);
        let some_inactive = reference.state.active.iter().any(|&a| !a);
        assert!(some_active && some_inactive);
        for alpha in [0.5, 10.0] {
            let cfg = PdasConfig { alpha, ..PdasConfig::default() };
            let other = solve(&sys, &cfg, None).unwrap();
            assert_eq!(other.state.active, reference.state.active);
            for (a, b) in other.state.u.iter().zip(&reference.state.u) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let cg = PdasConfig { solver: SolverKind::Cg { tol: 1e-14, max_iter: 5000 }, ..PdasConfig::default() };
        let other = solve(&sys, &cg, None).unwrap();
        assert_eq!(other.state.active, reference.state.active);
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let d = data(1, 0.0, 0.0);
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let cfg = PdasConfig { alpha: 0.0, ..PdasConfig::default() };
        assert!(matches!(solve(&sys, &cfg, None), Err(PdasError::Config(_))));
    }

    #[test]
    fn log_is_written_as_csv() {
        let d = data(2, -1.0, 0.0);
        let sys = SignoriniSystem::assemble(&d).unwrap();
        let sol = solve(&sys, &PdasConfig::default(), None).unwrap();
        let mut buf = Vec::new();
        write_log(&sol.log, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), sol.log.len() + 1);
    }
}
