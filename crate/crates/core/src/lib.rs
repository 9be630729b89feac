//! Controllability analysis and control synthesis for impulse-controlled
//! systems of heat equations coupled by a constant matrix pair `(A, B)`.
//!
//! The state obeys `y' = Δy − Ay` between control instants and jumps by
//! `χ_ω B u_k` at each instant `τ_k`. The crate is organised bottom-up:
//!
//! * [`linalg`]: dense kernels (matrix exponential, SVD-based rank and
//!   least squares, characteristic polynomial and eigenvalues).
//! * [`control`]: the finite-dimensional theory (Kalman matrix, critical
//!   window `d_A`, sampled controllability matrices, companion expansion of
//!   `e^{At}`, impulse steering of the ODE).
//! * [`heat`]: sine-basis realization of the heat system on an interval.
//! * [`synthesis`]: reachability operator, minimum-norm steering, the
//!   full-domain null control and obstruction witnesses.

pub mod control;
mod error;
pub mod heat;
pub mod linalg;
pub mod policy;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::{MatrixReal, RankTolerance};
