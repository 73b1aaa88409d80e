//! The a priori convergence study on the manufactured problem.

use std::io::Write;

use crate::duality::{apriori_errors, reconstruct_flux, AprioriErrors, DualityError};
use crate::manufactured::{eoc, square_mesh, ExactSolution};
use crate::mesh::MeshError;
use crate::pdas::{solve, PdasConfig, PdasError};
use crate::quadrature::QuadratureOrder;
use crate::system::{AssemblyError, SignoriniSystem};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] PdasError),
    #[error(transparent)]
    Duality(#[from] DualityError),
}

/// Quadrature used for the load and for the quasi-interpolants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyQuadrature {
    pub data: QuadratureOrder,
    pub interpolation: QuadratureOrder,
}

impl Default for StudyQuadrature {
    /// 8-point Gauss rules on sides and a 2x2 collapsed Gauss rule (exact for cubics) for
    /// the element means of the load.
    fn default() -> Self {
        let q = QuadratureOrder { side: 8, element: 2 };
        Self { data: q, interpolation: q }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriRow {
    pub level: usize,
    pub n_k: usize,
    /// Averaged mesh size `(|Omega| / #vertices)^(1/2)`, used for the rates.
    pub h: f64,
    pub h_max: f64,
    pub errors: AprioriErrors,
    pub pdas_iterations: usize,
    pub active_sides: usize,
    pub contact_sides: usize,
}

/// Solves the manufactured problem on the uniformly refined meshes of the given levels.
pub fn apriori_study(
    levels: impl IntoIterator<Item = usize>,
    quad: StudyQuadrature,
    config: &PdasConfig,
) -> Result<Vec<AprioriRow>, StudyError> {
    let exact = ExactSolution::default();
    let data_fns = exact.continuous_data();
    let mut rows = Vec::new();
    for level in levels {
        let mesh = square_mesh(level)?;
        let (h, h_max) = (mesh.h_avg(), mesh.h_max());
        let data = data_fns.discretize(mesh, quad.data);
        let system = SignoriniSystem::assemble(&data)?;
        let sol = solve(&system, config, None)?;
        let z = reconstruct_flux(&data, &sol.u)?;
        let errors = apriori_errors(&data, &exact, &sol.u, &z, quad.interpolation)?;
        rows.push(AprioriRow {
            level,
            n_k: system.n_k(),
            h,
            h_max,
            errors,
            pdas_iterations: sol.state.iterations,
            active_sides: sol.state.active.iter().filter(|&&a| a).count(),
            contact_sides: system.num_constraints(),
        });
    }
    Ok(rows)
}

/// Rates of `e_tot`, `e_gap` and `e_delta` between consecutive rows.
pub fn apriori_rates(rows: &[AprioriRow]) -> [Vec<Option<f64>>; 3] {
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let col = |f: fn(&AprioriErrors) -> f64| rows.iter().map(|r| f(&r.errors)).collect::<Vec<_>>();
    [eoc(&col(|e| e.e_tot), &hs), eoc(&col(|e| e.e_gap), &hs), eoc(&col(|e| e.e_delta), &hs)]
}

/// Mean of the last `count` defined rates.
pub fn mean_of_last(rates: &[Option<f64>], count: usize) -> Option<f64> {
    let defined: Vec<f64> = rates.iter().flatten().copied().collect();
    if defined.len() < count || count == 0 {
        return None;
    }
    Some(defined[defined.len() - count..].iter().sum::<f64>() / count as f64)
}

pub fn write_apriori_csv<W: Write>(rows: &[AprioriRow], mut out: W) -> std::io::Result<()> {
    let [r_tot, r_gap, r_delta] = apriori_rates(rows);
    writeln!(out, "level,N_k,h_k,e_tot,e_gap,e_delta,eoc_tot,eoc_gap,eoc_delta")?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.16e}"));
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            r.level,
            r.n_k,
            r.h,
            r.errors.e_tot,
            r.errors.e_gap,
            r.errors.e_delta,
            fmt(r_tot[i]),
            fmt(r_gap[i]),
            fmt(r_delta[i])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_has_no_rates() {
        let rows = apriori_study([1], StudyQuadrature::default(), &PdasConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_apriori_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.ends_with(",,,"));
    }

    #[test]
    fn mean_of_last_skips_missing() {
        assert_eq!(mean_of_last(&[None, Some(1.0), Some(3.0)], 2), Some(2.0));
        assert_eq!(mean_of_last(&[None, Some(1.0)], 2), None);
    }
}
