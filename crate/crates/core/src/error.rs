//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by meshing, assembly, solvers and optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("boundary tag intervals overlap on side {side:?}: edge at {at:?} matched twice")]
    OverlappingTags { side: crate::mesh::Side, at: (f64, f64) },

    #[error("coefficient below coercivity floor on element {element}: {value:e} < {floor:e}")]
    CoercivityFloor { element: usize, value: f64, floor: f64 },

    #[error("elasticity system has no Dirichlet constraints: rigid body modes are unconstrained")]
    RigidModes,

    #[error(
        "incompatible right-hand side for a pure-periodic/Neumann problem: \
         mean {mean:e} exceeds the zero-mean solvability condition (tolerance {tol:e})"
    )]
    IncompatibleRhs { mean: f64, tol: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (residual {residual:e}); last residuals: {history:?}")]
    SolverDiverged { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("volume target {target} infeasible for bounds [{lo}, {hi}]")]
    InfeasibleVolume { target: f64, lo: f64, hi: f64 },

    #[error("lamination is singular: {0}")]
    SingularLamination(String),

    #[error("target eigenvalues are off the bound surface (residual {residual:e})")]
    OffBoundSurface { residual: f64 },

    #[error("design field has unremovable orientation singularities: {0:?}")]
    OrientationSingular(Vec<(usize, f64)>),

    #[error("lattice period {eps} is below the resolution limit (2 fine cells = {limit})")]
    LatticeResolution { eps: f64, limit: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
