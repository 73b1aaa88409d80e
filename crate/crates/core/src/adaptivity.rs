//! Adaptive loop: solve, post-process, estimate, mark and refine.

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::duality::{continuous_gap, reconstruct_flux, DualityError, EstimatorReport};
use crate::mesh::{BoundaryLabel, DomainSpec, MarkedSet, Mesh, MeshError};
use crate::pdas::{solve, PdasConfig, PdasError, PdasState, PdasSolution};
use crate::quadrature::QuadratureOrder;
use crate::spaces::{CrFunction, P1Function, RtField};
use crate::system::{AssemblyError, ContinuousData, ProblemData, ScalarFn, SignoriniSystem};

#[derive(Debug, Error)]
pub enum AfemError {
    #[error("marking fraction must lie in (0, 1], got {0}")]
    Theta(f64),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("active set iteration failed at level {level}: {source}")]
    Solver { level: usize, source: PdasError },
    #[error(transparent)]
    Duality(#[from] DualityError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfemConfig {
    /// Dörfler fraction; 1 refines every element.
    pub theta: f64,
    pub eps_stop: f64,
    pub max_levels: usize,
    pub pdas: PdasConfig,
    /// Quadrature for the load and boundary data.
    pub data_quad: QuadratureOrder,
    /// Quadrature of the estimator.
    pub estimator_quad: QuadratureOrder,
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            eps_stop: 0.0,
            max_levels: 21,
            pdas: PdasConfig::default(),
            data_quad: QuadratureOrder::default(),
            estimator_quad: QuadratureOrder::uniform(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfemLevel {
    pub level: usize,
    pub n_k: usize,
    pub elements: usize,
    /// Averaged mesh size `(|Omega| / #vertices)^(1/2)`.
    pub h: f64,
    pub h_max: f64,
    pub eta_gap: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub pdas_iterations: usize,
    pub marked: usize,
    pub seconds: f64,
    /// Whether the obstacle is affine on every contact side, so that the vertex-wise
    /// obstacle condition of the post-processed function is exact.
    pub obstacle_affine: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AfemTrace {
    pub levels: Vec<AfemLevel>,
    pub stopped_by_tolerance: bool,
}

impl AfemTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "level,N_k,h_k,eta2,eta2_A,eta2_B,pdas_iterations,seconds")?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                l.level, l.n_k, l.h, l.eta_gap, l.eta_a, l.eta_b, l.pdas_iterations, l.seconds
            )?;
        }
        Ok(())
    }
}

/// Everything computed on one level, handed to the observer of [`run_afem`].
pub struct LevelArtifacts<'a> {
    pub level: usize,
    pub data: &'a ProblemData,
    pub solution: &'a PdasSolution,
    pub flux: &'a RtField,
    pub conforming: &'a P1Function,
    pub report: &'a EstimatorReport,
    pub marked: &'a MarkedSet,
}

/// Contact-modified node averaging: the mean of the adjacent element traces at free and
/// Neumann vertices, at least the obstacle at contact vertices and the Dirichlet data at
/// Dirichlet vertices.
pub fn postprocess_conforming(mesh: &Mesh, u: &CrFunction, u_d: &ScalarFn, chi: &ScalarFn) -> P1Function {
    let nv = mesh.num_vertices();
    let mut sum = vec![0.0; nv];
    let mut count = vec![0usize; nv];
    for t in 0..mesh.num_elements() {
        let values = u.vertex_values(mesh, t);
        for (i, &p) in mesh.triangles()[t].iter().enumerate() {
            sum[p] += values[i];
            count[p] += 1;
        }
    }
    let mut kind = vec![None; nv];
    for s in mesh.sides() {
        for &p in &s.vertices {
            kind[p] = match (kind[p], s.label) {
                (_, Some(BoundaryLabel::Dirichlet)) | (Some(BoundaryLabel::Dirichlet), _) => Some(BoundaryLabel::Dirichlet),
                (_, Some(BoundaryLabel::Contact)) | (Some(BoundaryLabel::Contact), _) => Some(BoundaryLabel::Contact),
                (k, _) => k,
            };
        }
    }
    P1Function(
        (0..nv)
            .map(|p| {
                let x = mesh.vertices()[p];
                let mean = sum[p] / count[p] as f64;
                match kind[p] {
                    Some(BoundaryLabel::Dirichlet) => u_d(x),
                    Some(BoundaryLabel::Contact) => mean.max(chi(x)),
                    _ => mean,
                }
            })
            .collect(),
    )
}

/// Whether `chi` agrees with its linear interpolant at the quadrature points of every
/// contact side.
pub fn obstacle_is_affine(mesh: &Mesh, chi: &ScalarFn, quad: QuadratureOrder) -> bool {
    let rule = quad.line_rule();
    mesh.boundary_sides(BoundaryLabel::Contact).all(|s| {
        let [a, b] = mesh.side(s).vertices;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let (ca, cb) = (chi(pa), chi(pb));
        rule.points.iter().all(|&t| {
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            (chi(x) - (ca + t * (cb - ca))).abs() <= 1e-12 * (1.0 + ca.abs() + cb.abs())
        })
    })
}

/// Smallest set carrying a `theta^2` share of the total indicator, built greedily from
/// the largest indicators (ties by ascending index). Negative indicators count as zero.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> MarkedSet {
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    let value = |t: usize| indicators[t].max(0.0);
    order.sort_by(|&a, &b| value(b).total_cmp(&value(a)).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| value(t)).sum();
    let target = theta * theta * total;
    let mut chosen = Vec::new();
    let mut acc = 0.0;
    for &t in &order {
        if acc >= target || value(t) == 0.0 {
            break;
        }
        acc += value(t);
        chosen.push(t);
    }
    MarkedSet::new(chosen, indicators.len())
}

/// Transfers a converged state to the refined mesh: side values of the old function on
/// the parent element and multipliers of the parent's contact side.
fn transfer_state(
    old_mesh: &Mesh,
    old: &PdasSolution,
    old_system: &SignoriniSystem,
    new_mesh: &Mesh,
    parents: &[usize],
    new_system: &SignoriniSystem,
) -> PdasState {
    let mut values = vec![0.0; new_mesh.num_sides()];
    for (i, s) in new_mesh.sides().iter().enumerate() {
        values[i] = old.u.eval(old_mesh, parents[s.minus], s.midpoint);
    }
    let u = new_system.from_cr(&CrFunction(values));
    let mut lambda = vec![0.0; new_system.num_constraints()];
    for (j, &s) in new_system.contact_sides.iter().enumerate() {
        let side = new_mesh.side(s);
        let parent = parents[side.minus];
        let hit = old_mesh.element_sides(parent).into_iter().find(|&os| {
            let o = old_mesh.side(os);
            o.label == Some(BoundaryLabel::Contact) && {
                let [a, b] = o.vertices.map(|v| old_mesh.vertices()[v]);
                let m = side.midpoint;
                ((b[0] - a[0]) * (m[1] - a[1]) - (b[1] - a[1]) * (m[0] - a[0])).abs() <= 1e-12 * o.length * o.length
            }
        });
        if let Some(os) = hit {
            if let Some(k) = old_system.contact_sides.iter().position(|&c| c == os) {
                lambda[j] = old.state.lambda[k];
            }
        }
    }
    PdasState { u, lambda, active: vec![false; new_system.num_constraints()], iterations: 0 }
}

/// Runs the adaptive loop from `mesh` until the estimator drops below `eps_stop` or
/// `max_levels` levels are done. The observer sees every level's artifacts.
pub fn run_afem(
    mesh: Mesh,
    continuous: &ContinuousData,
    config: &AfemConfig,
    mut observer: impl FnMut(&LevelArtifacts),
) -> Result<AfemTrace, AfemError> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(AfemError::Theta(config.theta));
    }
    let mut trace = AfemTrace::default();
    let mut data = continuous.discretize(mesh, config.data_quad);
    let mut system = SignoriniSystem::assemble(&data)?;
    let mut warm: Option<PdasState> = None;
    let mut clock = Instant::now();
    for level in 0..config.max_levels {
        let solution = solve(&system, &config.pdas, warm.take()).map_err(|source| AfemError::Solver { level, source })?;
        let flux = reconstruct_flux(&data, &solution.u)?;
        let conforming = postprocess_conforming(&data.mesh, &solution.u, &continuous.u_d, &continuous.chi);
        let obstacle_affine = obstacle_is_affine(&data.mesh, &continuous.chi, config.estimator_quad);
        let report = continuous_gap(&data, continuous, &conforming, &flux, config.estimator_quad)?;
        let stop = report.eta_gap <= config.eps_stop;
        let marked = if stop {
            MarkedSet::new(Vec::new(), data.mesh.num_elements())
        } else if config.theta >= 1.0 {
            MarkedSet::all(data.mesh.num_elements())
        } else {
            doerfler_mark(&report.local, config.theta)
        };
        observer(&LevelArtifacts {
            level,
            data: &data,
            solution: &solution,
            flux: &flux,
            conforming: &conforming,
            report: &report,
            marked: &marked,
        });
        trace.levels.push(AfemLevel {
            level,
            n_k: system.n_k(),
            elements: data.mesh.num_elements(),
            h: data.mesh.h_avg(),
            h_max: data.mesh.h_max(),
            eta_gap: report.eta_gap,
            eta_a: report.eta_a,
            eta_b: report.eta_b,
            pdas_iterations: solution.state.iterations,
            marked: marked.len(),
            seconds: clock.elapsed().as_secs_f64(),
            obstacle_affine,
        });
        if stop {
            trace.stopped_by_tolerance = true;
            break;
        }
        if level + 1 == config.max_levels {
            break;
        }
        clock = Instant::now();
        let (refined, parents) = data.mesh.rgb_refine_with_parents(&marked);
        let next_data = continuous.discretize(refined, config.data_quad);
        let next_system = SignoriniSystem::assemble(&next_data)?;
        warm = Some(transfer_state(&data.mesh, &solution, &system, &next_data.mesh, &parents, &next_system));
        data = next_data;
        system = next_system;
    }
    Ok(trace)
}

/// The benchmark with a Dirichlet-Neumann junction at `(1,0)`: `f = -1`, `g = 0`,
/// `u_D = 0` and `chi = min(|x_1|/2 - 1/4, 0)` on the bottom edge.
pub fn contact_corner_problem() -> ContinuousData {
    let mut data = ContinuousData::constant(-1.0, 0.0, 0.0, 0.0);
    data.chi = std::sync::Arc::new(|x| (0.5 * (x[0].abs() - 0.5)).min(0.0));
    data
}

/// Initial mesh of the benchmark: a 4x4 grid, so the kinks of the obstacle and the
/// boundary junction at `(1,0)` are vertices.
pub fn contact_corner_mesh() -> Result<Mesh, MeshError> {
    Mesh::rectangle_grid(&DomainSpec::contact_corner_square(), [-1.0, -1.0], [1.0, 1.0], 4, 4)
}

/// Estimator of `trace` at `n_k` by log-log interpolation between its levels; `None`
/// outside the range of the trace.
pub fn estimator_at(trace: &AfemTrace, n_k: f64) -> Option<f64> {
    trace.levels.windows(2).find_map(|w| {
        let (a, b) = (w[0].n_k as f64, w[1].n_k as f64);
        (a <= n_k && n_k <= b && a < b).then(|| {
            let t = (n_k / a).ln() / (b / a).ln();
            (w[0].eta_gap.ln() * (1.0 - t) + w[1].eta_gap.ln() * t).exp()
        })
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
