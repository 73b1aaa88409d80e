//! Primal-dual finite element solution and a posteriori error control for the scalar
//! Signorini problem, using Crouzeix-Raviart and Raviart-Thomas elements.

pub mod mesh;
pub mod linalg;
pub mod quadrature;
pub mod spaces;
pub mod system;
pub mod pdas;
pub mod oracle;
pub mod manufactured;
pub mod duality;
pub mod experiments;
pub mod adaptivity;
pub mod verification;
