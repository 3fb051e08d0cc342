//! Finite elements for the Dirichlet p(x)-Laplacian on triangulated rectangles.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: uniform and imported triangulations, P1 nodal fields, cell fields.
//! - [`quadrature`]: triangle rules and deterministic summation.
//! - [`exponent`]: variable exponents, modulars, Luxemburg and `W^{1,p(·)}` norms.
//! - [`linalg`]: stiffness assembly and the Dirichlet-constrained CG solve.
//! - [`dc`]: the decomposition–coordination iteration and discrete residuals.
//! - [`exact`]: the exponential benchmark family and the radial disk solution.
//! - [`harness`]: convergence studies, rate fits and output files.

pub mod dc;
pub mod error;
pub mod exact;
pub mod exponent;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod quadrature;

pub use dc::{dc_iterate, scalar_solve, ConvergenceLog, DcConfig, DcOutcome, DcSolver, DcState, ExponentSampling};
pub use error::{Error, Result};
pub use exact::{make_benchmark, BenchmarkCase, RadialCase, RadialFn};
pub use exponent::{luxemburg_norm, modular, w1p_norm, VariableExponent};
pub use harness::{fit_rate, run_study, GridConvention, RateFit, StudyConfig, StudyRecord};
pub use mesh::{CellVectorField, Interval, Mesh, NodalField, Point};
pub use quadrature::{QuadChoice, QuadratureRule};
