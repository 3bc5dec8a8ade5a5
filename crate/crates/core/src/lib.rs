//! Stretched Brownian motion between finitely supported marginals.
//!
//! Given probability measures `mu`, `nu` on the line (or the plane) in convex
//! order, the static weak transport problem
//!
//! ```text
//! WT(mu, nu) = sup { Σ_x mu(x) H(pi_x) : mean(pi_x) = x, Σ_x mu(x) pi_x = nu }
//! H(eta)     = sup { ∫ m·b dq : q coupling of eta and the standard Gaussian }
//! ```
//!
//! has a unique optimizer; the associated martingale `M_t = f_t(B_t)` (a
//! Bass-type martingale built from a base measure `alpha` and a monotone map
//! `f` with `f(alpha * gamma) = nu`) is the stretched Brownian motion from
//! `mu` to `nu`. This crate solves the static problem two independent ways
//! (Frank–Wolfe over the martingale polytope, and a fixed-point iteration for
//! the Bass parametrisation), simulates paths of the resulting martingale,
//! and machine-checks the structural properties the optimizer must satisfy:
//! scaling of the value along displacement interpolations, time-consistency,
//! Lipschitz transition kernels, and the two-point monotonicity principle.
//!
//! Modules:
//! - [`measures`]: discrete measures, potential functions, convex order,
//!   Wasserstein distances, file formats.
//! - [`decompose`]: irreducible-component decomposition of a 1-d pair.
//! - [`gaussian`]: normal special functions and Gaussian discretizations.
//! - [`maxcorr`]: the max-correlation functional `H` and its dual potential.
//! - [`lp`] / [`transport`]: dense revised simplex and bipartite network
//!   simplex backends.
//! - [`wot`]: Frank–Wolfe solver for the static problem, monotonicity
//!   certificate.
//! - [`bass`]: Bass martingale construction and the fixed-point solver.
//! - [`dynamics`]: path simulation, displacement interpolation, scaling and
//!   time-consistency reports, piecewise (local-vol style) chains.
//! - [`verify`]: certificate reports for kernel properties and cross-solver
//!   validation.

pub mod bass;
pub mod decompose;
pub mod dynamics;
pub mod gaussian;
pub mod lp;
pub mod maxcorr;
pub mod measures;
pub mod report;
pub mod transport;
pub mod verify;
pub mod wot;

pub use bass::{BassModel, MonotoneMap, SbmModel};
pub use decompose::{Component, Decomposition};
pub use dynamics::{InterpolationCurve, PathEnsemble};
pub use gaussian::GaussianDiscretization;
pub use maxcorr::MaxCorrResult;
pub use measures::{DiscreteMeasure, PotentialFunction};
pub use verify::CertificateReport;
pub use wot::{MartingaleKernel, WotSolution};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: a measure needs at least one atom")]
    EmptyMeasure,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weights must be nonnegative and sum to a positive value")]
    BadWeights,

    #[error("operation requires dim = 1, measure has dim {0}")]
    NotOneDimensional(usize),

    #[error("quantile level must lie in (0,1), got {0}")]
    QuantileLevel(f64),

    #[error("measures are not in convex order: {0}")]
    NotInConvexOrder(String),

    #[error("support too large for LP path: {rows} x {cols} exceeds cap {cap}")]
    SupportTooLarge { rows: usize, cols: usize, cap: usize },

    #[error("linear program infeasible: {0}")]
    LpInfeasible(String),

    #[error("linear solver failure: {0}")]
    LpFailure(String),

    #[error("unsupported discretization: {0}")]
    UnsupportedDiscretization(String),

    #[error("component/kernel mismatch: {0}")]
    ComponentMismatch(String),

    #[error("value {0} outside the range of f_0")]
    OutsideRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fixed point did not converge: residual {residual} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
