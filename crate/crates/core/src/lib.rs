//! Two-dimensional topology optimization by the homogenization method.
//!
//! The crate covers the full pipeline:
//!
//! * structured Q1 finite elements for scalar (conductivity / membrane) and
//!   plane-elasticity problems, including periodic cell problems ([`mesh`],
//!   [`fem`]),
//! * periodic homogenization of parametrized unit cells and tabulation of
//!   effective Hooke laws ([`cell`]),
//! * closed-form composite algebra: sequential laminates, Hashin–Shtrikman
//!   bounds and the optimal complementary-energy bound ([`laminate`]),
//! * parametric thickness optimization with adjoint gradients ([`thickness`]),
//! * relaxed (composite) topology optimization, penalization and SIMP
//!   ([`topopt`]),
//! * dehomogenization of a graded microstructure into an explicit lattice
//!   through an orientation double cover and a conformal grid map ([`dehomog`]).

pub mod cell;
pub mod dehomog;
pub mod error;
pub mod fem;
pub mod field;
pub mod history;
pub mod hooke;
pub mod io;
pub mod laminate;
pub mod mesh;
pub mod problems;
pub mod sparse;
pub mod thickness;
pub mod topopt;

pub use error::{Error, Result};
pub use field::{Association, ScalarField, TensorField2, VectorField};
pub use hooke::{Hooke2D, IsotropicModuli, KelvinVec};
pub use mesh::{BoundaryTag, Mesh2D, Side};
