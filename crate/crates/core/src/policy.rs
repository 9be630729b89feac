//! Default tolerances shared by the library, the CLI and the test suites.

/// Imaginary parts with `|Im λ| <= REAL_EIGENVALUE_CUT * (1 + |λ|)` count as real.
pub const REAL_EIGENVALUE_CUT: f64 = 1e-9;

/// Band around `d_A` inside which a window is flagged as sitting on the boundary.
pub const WINDOW_BOUNDARY_BAND: f64 = 1e-9;

/// Relative steering residual below which a target counts as exactly reached.
pub const EXACT_STEERING_RESIDUAL: f64 = 1e-9;

/// Maximum dimension accepted by the polynomial-based eigenvalue solver.
pub const EIGEN_MAX_DIM: usize = 32;

/// Per-root acceptance: `|g(λ)| <= EIGEN_RESIDUAL * (1 + |λ|)^n`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;

/// Guard on `N·n·p·m` when assembling the reachability map.
pub const REACHABILITY_ENTRY_GUARD: usize = 10_000_000;

/// Default number of sine modes.
pub const DEFAULT_MODES: usize = 64;
