//! Central tolerance constants with their numerical rationale.
//!
//! Three tiers are used throughout the crate and its test suites:
//! identity-level checks (exact discrete identities, limited only by f64
//! roundoff and linear-solver stopping criteria), inequality checks
//! (analytic bounds that hold with margin; 5% slack), and
//! refinement-stability checks (quantities that should be grid-converged;
//! 20% slack).

/// Discrete identities evaluated in one pass over a field (reflection maps,
/// Pythagoras splits, Gram matrices). Roundoff accumulates like
/// `sqrt(n)·eps_f64` with `n <= 1e6` values, so 1e-10 is conservative.
pub const IDENTITY: f64 = 1e-10;

/// Identities that additionally pass through a converged iterative solve
/// (Leray projection, implicit steps). The conjugate-gradient stopping
/// criterion is set two orders below this.
pub const SOLVER_IDENTITY: f64 = 1e-9;

/// Per-step skew-advection energy residual, scaled by ‖u‖·‖v‖².
pub const SKEW: f64 = 1e-11;

/// Symmetry-preservation drift per trajectory, scaled by ‖u‖.
pub const SYMMETRY_DRIFT: f64 = 1e-11;

/// Bilinearity / norm-compatibility of inner products, relative.
pub const INNER_COMPAT: f64 = 1e-13;

/// Exact-arithmetic identities on freshly built fields (mollifier mass,
/// isometry of the reflection), relative.
pub const EXACT_CONSTRUCTION: f64 = 1e-14;

/// Slack factor for analytic inequalities checked on runs (decay envelopes,
/// spectral bounds): they hold in the continuum with margin; discretization
/// perturbs constants by O(h²).
pub const INEQUALITY_SLACK: f64 = 1.05;

/// Slack factor for grid-refinement stability of empirical constants.
pub const REFINEMENT_SLACK: f64 = 1.20;

/// Relative residual target for the pressure-Poisson conjugate gradient.
pub const CG_REL_RESIDUAL: f64 = 1e-13;

/// Iteration cap for conjugate-gradient solves before reporting failure.
pub const CG_MAX_ITERS: usize = 20_000;

/// Divergence max-norm bound for the "solenoidal" field tag, scaled by
/// ‖u‖_{L²} / min grid spacing.
pub const SOLENOIDAL_DIV: f64 = 1e-10;

/// Residual bound for accepted eigenpairs, scaled by the eigenvalue.
pub const EIGEN_RESIDUAL: f64 = 1e-8;
