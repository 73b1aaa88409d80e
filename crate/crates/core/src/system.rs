//! Discrete Signorini problem: data, energies, admissibility tests and the assembled
//! algebraic system `S U + p Lambda = P F + G`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryLabel, Mesh, Point};
use crate::quadrature::QuadratureOrder;
use crate::spaces::{project_elementwise, project_sidewise, CrFunction, PwConstant, RtField, SideConstant};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Load, Neumann data, Dirichlet data and obstacle as functions on the domain.
#[derive(Clone)]
pub struct ContinuousData {
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub u_d: ScalarFn,
    pub chi: ScalarFn,
    /// `f` is constant on every element and `g` on every Neumann side of any mesh
    /// resolving the domain, so the reconstructed flux is exactly admissible.
    pub resolved: bool,
}

impl fmt::Debug for ContinuousData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousData").field("resolved", &self.resolved).finish_non_exhaustive()
    }
}

impl ContinuousData {
    pub fn constant(f: f64, g: f64, u_d: f64, chi: f64) -> Self {
        Self {
            f: Arc::new(move |_| f),
            g: Arc::new(move |_| g),
            u_d: Arc::new(move |_| u_d),
            chi: Arc::new(move |_| chi),
            resolved: true,
        }
    }

    /// Element and side means of the data on `mesh`. The obstacle is taken as the side
    /// means of its Crouzeix-Raviart interpolant on contact sides and equals the Dirichlet
    /// data on Dirichlet sides.
    pub fn discretize(&self, mesh: Mesh, quad: QuadratureOrder) -> ProblemData {
        let f = project_elementwise(&mesh, quad, &*self.f);
        let mut g = project_sidewise(&mesh, quad, &*self.g);
        let mut u_d = project_sidewise(&mesh, quad, &*self.u_d);
        let mut chi = project_sidewise(&mesh, quad, &*self.chi);
        for (i, s) in mesh.sides().iter().enumerate() {
            match s.label {
                Some(BoundaryLabel::Neumann) => {
                    u_d.0[i] = 0.0;
                    chi.0[i] = 0.0;
                }
                Some(BoundaryLabel::Dirichlet) => {
                    g.0[i] = 0.0;
                    chi.0[i] = u_d.0[i];
                }
                Some(BoundaryLabel::Contact) => {
                    g.0[i] = 0.0;
                    u_d.0[i] = 0.0;
                }
                None => {
                    g.0[i] = 0.0;
                    u_d.0[i] = 0.0;
                    chi.0[i] = 0.0;
                }
            }
        }
        ProblemData::new(mesh, f, g, u_d, chi).expect("discretized data is compatible by construction")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("data arrays do not match the mesh")]
    Shape,
    #[error("obstacle differs from Dirichlet data on side {0}")]
    Incompatible(usize),
}

/// Which admissibility condition is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Dirichlet,
    Obstacle,
    Divergence,
    NeumannFlux,
    ContactSign,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Dirichlet => "dirichlet",
            Condition::Obstacle => "obstacle",
            Condition::Divergence => "divergence",
            Condition::NeumannFlux => "neumann flux",
            Condition::ContactSign => "contact sign",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("inadmissible: {condition} violated by {magnitude:e} at index {index}")]
pub struct Inadmissible {
    pub condition: Condition,
    pub index: usize,
    pub magnitude: f64,
}

/// Element-wise load, Neumann data, Dirichlet data and obstacle on a fixed mesh.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub mesh: Mesh,
    pub f: PwConstant,
    pub g: SideConstant,
    pub u_d: SideConstant,
    pub chi: SideConstant,
}

impl ProblemData {
    pub fn new(mesh: Mesh, f: PwConstant, g: SideConstant, u_d: SideConstant, chi: SideConstant) -> Result<Self, DataError> {
        if f.0.len() != mesh.num_elements() || [&g, &u_d, &chi].iter().any(|s| s.0.len() != mesh.num_sides()) {
            return Err(DataError::Shape);
        }
        for i in mesh.boundary_sides(BoundaryLabel::Dirichlet) {
            if chi.0[i] != u_d.0[i] {
                return Err(DataError::Incompatible(i));
            }
        }
        Ok(Self { mesh, f, g, u_d, chi })
    }

    pub fn scale(&self) -> f64 {
        [&self.f.0, &self.g.0, &self.u_d.0, &self.chi.0]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Admissibility tolerance `1e-10 (1 + scale)`.
    pub fn tau_adm(&self) -> f64 {
        1e-10 * (1.0 + self.scale())
    }

    /// Finite part of the discrete primal energy.
    pub fn primal_energy_unchecked(&self, v: &CrFunction) -> f64 {
        let m = &self.mesh;
        let grad = v.gradient(m);
        let means = v.element_means(m);
        let mut e = 0.0;
        for t in 0..m.num_elements() {
            let g = grad.0[t];
            e += m.area(t) * (0.5 * (g[0] * g[0] + g[1] * g[1]) - self.f.0[t] * means.0[t]);
        }
        for s in m.boundary_sides(BoundaryLabel::Neumann) {
            e -= m.side(s).length * self.g.0[s] * v.0[s];
        }
        e
    }

    /// Discrete primal energy, or the violated constraint if `v` is not admissible.
    pub fn primal_energy(&self, v: &CrFunction) -> Result<f64, Inadmissible> {
        self.check_admissible_primal(v)?;
        Ok(self.primal_energy_unchecked(v))
    }

    /// Finite part of the discrete dual energy.
    pub fn dual_energy_unchecked(&self, y: &RtField) -> f64 {
        let m = &self.mesh;
        let means = y.element_means(m);
        let quad: f64 = (0..m.num_elements())
            .map(|t| {
                let q = means.0[t];
                m.area(t) * (q[0] * q[0] + q[1] * q[1])
            })
            .sum();
        let boundary: f64 = m
            .sides()
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.label, Some(BoundaryLabel::Dirichlet | BoundaryLabel::Contact)))
            .map(|(i, s)| s.length * y.0[i] * self.chi.0[i])
            .sum();
        -0.5 * quad + boundary
    }

    pub fn dual_energy(&self, y: &RtField) -> Result<f64, Inadmissible> {
        self.check_admissible_dual(y)?;
        Ok(self.dual_energy_unchecked(y))
    }

    /// Largest primal constraint violation (non-positive when admissible).
    pub fn primal_violation(&self, v: &CrFunction) -> Inadmissible {
        let mut worst = Inadmissible { condition: Condition::Dirichlet, index: 0, magnitude: f64::NEG_INFINITY };
        for (s, side) in self.mesh.sides().iter().enumerate() {
            let (condition, magnitude) = match side.label {
                Some(BoundaryLabel::Dirichlet) => (Condition::Dirichlet, (v.0[s] - self.u_d.0[s]).abs()),
                Some(BoundaryLabel::Contact) => (Condition::Obstacle, self.chi.0[s] - v.0[s]),
                _ => continue,
            };
            if magnitude > worst.magnitude {
                worst = Inadmissible { condition, index: s, magnitude };
            }
        }
        worst
    }

    /// Largest dual constraint violation (non-positive when admissible). Divergence defects
    /// are reported as flux imbalance per unit boundary length of the element.
    pub fn dual_violation(&self, y: &RtField) -> Inadmissible {
        let m = &self.mesh;
        let mut worst = Inadmissible { condition: Condition::Divergence, index: 0, magnitude: f64::NEG_INFINITY };
        // The divergence defect is weighted by |T| / |dT|, turning it into a normal flux
        // imbalance per unit boundary length, comparable with the flux conditions and
        // insensitive to the element size.
        for t in 0..m.num_elements() {
            let perimeter: f64 = m.element_sides(t).iter().map(|&s| m.side(s).length).sum();
            let magnitude = m.area(t) / perimeter * (y.element_divergence(m, t) + self.f.0[t]).abs();
            if magnitude > worst.magnitude {
                worst = Inadmissible { condition: Condition::Divergence, index: t, magnitude };
            }
        }
        for (s, side) in m.sides().iter().enumerate() {
            let (condition, magnitude) = match side.label {
                Some(BoundaryLabel::Neumann) => (Condition::NeumannFlux, (y.0[s] - self.g.0[s]).abs()),
                Some(BoundaryLabel::Contact) => (Condition::ContactSign, -y.0[s]),
                _ => continue,
            };
            if magnitude > worst.magnitude {
                worst = Inadmissible { condition, index: s, magnitude };
            }
        }
        worst
    }

    pub fn check_admissible_primal(&self, v: &CrFunction) -> Result<(), Inadmissible> {
        let worst = self.primal_violation(v);
        if worst.magnitude > self.tau_adm() {
            return Err(worst);
        }
        Ok(())
    }

    pub fn check_admissible_dual(&self, y: &RtField) -> Result<(), Inadmissible> {
        let worst = self.dual_violation(y);
        if worst.magnitude > self.tau_adm() {
            return Err(worst);
        }
        Ok(())
    }

    pub fn is_admissible_primal(&self, v: &CrFunction) -> bool {
        self.check_admissible_primal(v).is_ok()
    }

    pub fn is_admissible_dual(&self, y: &RtField) -> bool {
        self.check_admissible_dual(y).is_ok()
    }

    /// Left-hand side of the discrete primal variational inequality,
    /// `(grad u, grad(u - v)) - (f, Pi(u - v)) - (g, pi(u - v))_N`, which is non-positive
    /// for the discrete solution `u` and every admissible `v`.
    pub fn variational_inequality(&self, u: &CrFunction, v: &CrFunction) -> f64 {
        let diff = CrFunction(u.0.iter().zip(&v.0).map(|(a, b)| a - b).collect());
        let m = &self.mesh;
        let gu = u.gradient(m);
        let gd = diff.gradient(m);
        let md = diff.element_means(m);
        let mut r = 0.0;
        for t in 0..m.num_elements() {
            r += m.area(t) * (gu.0[t][0] * gd.0[t][0] + gu.0[t][1] * gd.0[t][1] - self.f.0[t] * md.0[t]);
        }
        for s in m.boundary_sides(BoundaryLabel::Neumann) {
            r -= m.side(s).length * self.g.0[s] * diff.0[s];
        }
        r
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("the Dirichlet boundary is empty, so the stiffness matrix is singular")]
    NoDirichlet,
}

/// Assembled matrices and vectors over the free (non-Dirichlet) Crouzeix-Raviart dofs.
#[derive(Debug, Clone)]
pub struct SignoriniSystem {
    /// Stiffness matrix over free dofs.
    pub s: CsrMatrix,
    /// Free dof of each side.
    pub side_to_dof: Vec<Option<usize>>,
    pub dof_to_side: Vec<usize>,
    /// Contact side of each constraint row.
    pub contact_sides: Vec<usize>,
    /// Free dof of each constraint row; `p` has the single entry `|S_j|` in row `contact_dofs[j]`.
    pub contact_dofs: Vec<usize>,
    pub contact_lengths: Vec<f64>,
    /// `P F`: element load tested with element means of the basis.
    pub pf: Vec<f64>,
    /// `G`: Neumann load.
    pub g: Vec<f64>,
    /// Coupling of free dofs to the prescribed Dirichlet values, already moved to the right.
    pub dirichlet_lift: Vec<f64>,
    /// `X_j = |S_j| chi_{S_j}`.
    pub x: Vec<f64>,
    /// Elements kept as columns of `P` (those touching a free dof).
    pub p_columns: Vec<usize>,
    /// Dirichlet values per side.
    pub u_d: Vec<f64>,
}

impl SignoriniSystem {
    pub fn assemble(data: &ProblemData) -> Result<Self, AssemblyError> {
        let m = &data.mesh;
        if m.count_sides(BoundaryLabel::Dirichlet) == 0 {
            return Err(AssemblyError::NoDirichlet);
        }
        let mut side_to_dof = vec![None; m.num_sides()];
        let mut dof_to_side = Vec::new();
        for (s, side) in m.sides().iter().enumerate() {
            if side.label != Some(BoundaryLabel::Dirichlet) {
                side_to_dof[s] = Some(dof_to_side.len());
                dof_to_side.push(s);
            }
        }
        let n = dof_to_side.len();
        let mut triplets = Vec::with_capacity(9 * m.num_elements());
        let mut pf = vec![0.0; n];
        let mut lift = vec![0.0; n];
        let mut p_columns = Vec::new();
        for t in 0..m.num_elements() {
            let k = local_stiffness(m, t);
            let sides = m.element_sides(t);
            let mut touches_free = false;
            for i in 0..3 {
                let Some(di) = side_to_dof[sides[i]] else { continue };
                touches_free = true;
                pf[di] += m.area(t) / 3.0 * data.f.0[t];
                for j in 0..3 {
                    match side_to_dof[sides[j]] {
                        Some(dj) => triplets.push((di, dj, k[i][j])),
                        None => lift[di] -= k[i][j] * data.u_d.0[sides[j]],
                    }
                }
            }
            if touches_free {
                p_columns.push(t);
            }
        }
        let s = CsrMatrix::from_triplets(n, &triplets);
        let mut g = vec![0.0; n];
        for side in m.boundary_sides(BoundaryLabel::Neumann) {
            let d = side_to_dof[side].expect("Neumann sides are free");
            g[d] += m.side(side).length * data.g.0[side];
        }
        let contact_sides: Vec<usize> = m.boundary_sides(BoundaryLabel::Contact).collect();
        let contact_dofs = contact_sides.iter().map(|&s| side_to_dof[s].expect("contact sides are free")).collect();
        let contact_lengths: Vec<f64> = contact_sides.iter().map(|&s| m.side(s).length).collect();
        let x = contact_sides.iter().zip(&contact_lengths).map(|(&s, l)| l * data.chi.0[s]).collect();
        Ok(Self {
            s,
            side_to_dof,
            dof_to_side,
            contact_sides,
            contact_dofs,
            contact_lengths,
            pf,
            g,
            dirichlet_lift: lift,
            x,
            p_columns,
            u_d: data.u_d.0.clone(),
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_to_side.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.contact_sides.len()
    }

    /// Right-hand side `P F + G` including the Dirichlet lift.
    pub fn rhs(&self) -> Vec<f64> {
        (0..self.num_dofs()).map(|i| self.pf[i] + self.g[i] + self.dirichlet_lift[i]).collect()
    }

    /// `p^T U`: the contact side means of `U` weighted by side lengths.
    pub fn contact_trace(&self, u: &[f64]) -> Vec<f64> {
        self.contact_dofs.iter().zip(&self.contact_lengths).map(|(&d, l)| l * u[d]).collect()
    }

    /// `p Lambda` as a dof vector.
    pub fn apply_p(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs()];
        for ((&d, l), lam) in self.contact_dofs.iter().zip(&self.contact_lengths).zip(lambda) {
            out[d] += l * lam;
        }
        out
    }

    /// Obstacle value `chi_S` of constraint row `j`.
    pub fn obstacle(&self, j: usize) -> f64 {
        self.x[j] / self.contact_lengths[j]
    }

    /// Expands free dof values into a function on all sides.
    pub fn to_cr(&self, u: &[f64]) -> CrFunction {
        let mut c = self.u_d.clone();
        for (d, &s) in self.dof_to_side.iter().enumerate() {
            c[s] = u[d];
        }
        CrFunction(c)
    }

    pub fn from_cr(&self, v: &CrFunction) -> Vec<f64> {
        self.dof_to_side.iter().map(|&s| v.0[s]).collect()
    }

    /// Dof count `N_k`: free Crouzeix-Raviart dofs plus contact multipliers.
    pub fn n_k(&self) -> usize {
        self.num_dofs() + self.num_constraints()
    }

    /// Writes `S`, `p` and the vectors as `name row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# dofs {} constraints {}", self.num_dofs(), self.num_constraints())?;
        for i in 0..self.num_dofs() {
            for (j, v) in self.s.row(i) {
                writeln!(out, "S {i} {j} {v:.16e}")?;
            }
        }
        for (j, (&d, l)) in self.contact_dofs.iter().zip(&self.contact_lengths).enumerate() {
            writeln!(out, "p {d} {j} {l:.16e}")?;
        }
        let b = self.rhs();
        for (i, v) in b.iter().enumerate() {
            writeln!(out, "b {i} 0 {v:.16e}")?;
        }
        for (j, v) in self.x.iter().enumerate() {
            writeln!(out, "X {j} 0 {v:.16e}")?;
        }
        Ok(())
    }
}

/// Element stiffness matrix in local side order.
pub fn local_stiffness(mesh: &Mesh, t: usize) -> [[f64; 3]; 3] {
    let g = [0, 1, 2].map(|j| crate::spaces::cr_basis_gradient(mesh, t, j));
    let a = mesh.area(t);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}
