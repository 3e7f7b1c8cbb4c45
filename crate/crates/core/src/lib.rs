//! Diagonal and scalar expectation propagation for generalized linear
//! models, together with the free-probability machinery (Stieltjes, R- and
//! S-transforms, free convolutions, resolvent local laws) that ties the two
//! solvers together: under asymptotic freeness of the design, the
//! per-coordinate site precisions of the diagonal solver concentrate around
//! deterministic scalars computable from the spectrum alone, which is what
//! lets the scalar solver run at quadratic instead of cubic per-sweep cost.
//!
//! Modules
//! - [`model`]: problem definition, EP state, posterior summaries.
//! - [`sites`]: per-coordinate tilted moments (Gaussian, spike-and-slab,
//!   probit) plus a quadrature ground-truth oracle.
//! - [`solver_diag`]: cubic-cost solver with per-coordinate site precisions.
//! - [`solver_scalar`]: quadratic-cost solver over a precomputed SVD.
//! - [`freeprob`]: empirical spectra and their transforms.
//! - [`locallaw`]: numerical verification harness for the concentration
//!   claims and the supporting matrix identities.
//! - [`randmat`]: seeded random-matrix ensembles.

// Link the system BLAS/LAPACK backend.
extern crate blas_src;
extern crate openblas_src;

pub mod error;
pub mod freeprob;
pub mod linalg;
pub mod locallaw;
pub mod model;
pub mod randmat;
pub mod sites;
pub mod solver_diag;
pub mod solver_scalar;

pub use error::{CoreError, Result};
pub use model::{
    init_state, validate_problem, DiagOrScalar, EpState, GlmProblem, InitConfig, LikelihoodSpec,
    PosteriorSummary, PriorSpec, SolverFlavor,
};
pub use solver_diag::{
    ep_sweep_diagonal, gaussian_projection, solve_diagonal, tap_residuals, SolveResult,
    SolverConfig, SweepStats,
};
pub use solver_scalar::{
    ep_sweep_scalar, lambda2_from_spectrum, precompute_svd, scalar_projection, solve_scalar,
    solve_scalar_with_cache, SpectrumScalars, SvdCache,
};
