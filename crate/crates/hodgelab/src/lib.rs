//! A computational workbench for Hodge-Dirac operators `D = d + δ̲` on
//! Lipschitz-type domains.
//!
//! The crate is organised in layers:
//!
//! * [`exterior`] — exact (rational) exterior algebra of ℝⁿ: blades, wedge,
//!   interior product, Hodge star, inner product.
//! * [`polyform`] — differential forms with polynomial coefficients, exact
//!   `d`, `δ`, pullbacks, and the closed-form Poincaré potential on the unit
//!   ball together with its smoothing defect.
//! * [`geometry`] — atlases of bilipschitz charts with Lipschitz partitions
//!   of unity, quadrature evaluation of the glued potentials, and the
//!   boundary-smoothing constructions.
//! * [`mesh`] — cubical complexes over voxelised domains, cochains and
//!   discrete Lᵖ norms.
//! * [`discrete_ops`] — assembly of discrete Hodge-Dirac operators with
//!   tangential or normal boundary conditions, Hodge-Laplacians and
//!   coefficient-perturbed variants.
//! * [`hodge`] — discrete Hodge decompositions, harmonic spaces, discrete
//!   potential operators and ℓᵖ projection-norm estimates.
//! * [`funcalc`] — sector geometry, resolvents, contour-integral holomorphic
//!   functional calculus with a spectral oracle, resolvent sweeps and
//!   off-diagonal decay measurements.
//! * [`localization`] — Whitney-type covers, the dyadic maximal function and
//!   Calderón-Zygmund decompositions in potential form.
//! * [`exponents`] — exact Sobolev/Hölder exponent arithmetic.

pub mod discrete_ops;
pub mod exponents;
pub mod exterior;
pub mod funcalc;
pub mod geometry;
pub mod hodge;
pub mod linalg;
pub mod localization;
pub mod mesh;
pub mod polyform;

pub use exterior::Multivector;
pub use polyform::{BumpSpec, PolyForm};

/// Errors shared across the workbench modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degree cap {cap} exceeded (got {got})")]
    DegreeCap { cap: u32, got: u32 },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("point outside domain")]
    OutsideDomain,
    #[error("cell count cap {cap} exceeded ({got} cells)")]
    CellCap { cap: usize, got: usize },
    #[error("empty voxel set")]
    EmptyVoxelSet,
    #[error("singular system: {0}")]
    Singular(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
