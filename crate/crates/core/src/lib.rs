//! Initial shape identification for bodies under small deformations.
//!
//! Given a displacement field and the boundary a part should have *after*
//! deformation, find the boundary it must have *before*. The solver uses the
//! desired boundary as first guess and moves every node by its residual, plus
//! an optional corrective term derived from the displacement gradient, until
//! the deformed nodes land on the desired ones.
//!
//! ```
//! use initshape::{make_disc, solve, AffineShearVolumetricField, Point2, SchemeKind, SolverConfig, Status};
//!
//! let desired = make_disc(0.01, 100, Point2::ORIGIN).unwrap();
//! let field = AffineShearVolumetricField::new(0.6).unwrap();
//! let report = solve(&desired, &field, &SolverConfig::new(SchemeKind::SchemeII, 1e-11)).unwrap();
//! assert_eq!(report.status, Status::Converged);
//! ```

pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod oracle;
pub mod solver;

pub use error::{Error, ExternalFailure, Result};
pub use field::{
    fd_jacobian, fd_jacobians, AffineField, AffineShearVolumetricField, DisplacementField,
    ExternalSolverField, FnField, Jacobian2, JacobianCapability,
};
pub use geometry::{make_disc, read_curve, write_curve, BoundaryCurve, Point2, Vector2};
pub use oracle::{analytic_inverse, residual_recurrence_oracle, AffineInverseProblem};
pub use solver::{
    corrective_scheme_ii, corrective_scheme_iii, extract_initial_geometry, first_iteration,
    iterate_step, solve, ConvergenceReport, IterationRecord, JacobianMode, SchemeKind,
    SingularFallback, SolverConfig, Status,
};
