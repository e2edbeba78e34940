//! Uncertainty quantification for elliptic diffusion problems whose
//! anisotropic diffusion tensor follows a random vector field.
//!
//! The pipeline: nested tetrahedral meshes of the unit cube (`mesh`), a
//! matrix-valued covariance model (`covariance`) factorized by pivoted
//! Cholesky into a truncated Karhunen–Loève expansion (`kl`), the rank-one
//! anisotropic diffusion tensor and its parametric regularity constants
//! (`diffusion`), per-sample P1 finite element solves (`fem`), Monte Carlo /
//! Halton / anisotropic sparse grid parameter quadrature (`quadrature`), and
//! mean/variance estimation with multi-level convergence studies (`uq`).
//!
//! All numerics are generic over the scalar type through [`scalar::Real`];
//! the aliases below fix the common double-precision instantiation.

pub mod covariance;
pub mod diffusion;
pub mod error;
pub mod fem;
pub mod geom;
pub mod kl;
pub mod mesh;
pub mod quadrature;
pub mod scalar;
pub mod uq;
pub mod vtk;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the main pipeline types.
pub type TetMesh64 = mesh::TetMesh<f64>;
pub type CovarianceModel64 = covariance::CovarianceModel<f64>;
pub type KlExpansion64 = kl::KlExpansion<f64>;
pub type FeFunction64 = fem::FeFunction<f64>;
pub type QuadratureRule64 = quadrature::QuadratureRule<f64>;
pub type MomentFields64 = uq::MomentFields<f64>;
pub type StudyConfig64 = uq::StudyConfig<f64>;
