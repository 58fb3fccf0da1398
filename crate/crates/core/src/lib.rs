//! Energy-efficient velocity profiles for a movable antenna performing
//! 1-D direction-of-arrival sensing.
//!
//! A single antenna slides along a linear track of length `L` during a
//! sensing interval `[0, T]`. Estimation accuracy grows with the spatial
//! variance of the sampled positions, while moving the antenna costs
//! mechanical energy (inertia, linear damping, quadratic drag). This crate
//! optimizes the trade-off: it searches for the velocity profile `v(t)`
//! maximizing the sensing energy efficiency `variance / energy`.
//!
//! The pieces, bottom-up:
//!
//! * [`functionals`] — trajectory, variance, and energy functionals with
//!   quadrature evaluation, plus the Brownian-bridge kernel form of the
//!   variance.
//! * [`spectral`] — the sinusoidal eigenbasis that diagonalizes the variance
//!   kernel, the Galerkin residual of the stationarity condition, and its
//!   analytic Jacobian.
//! * [`sos`] — exact algebraic encoding of `0 <= v(t) <= V_max` as linear
//!   equalities plus positive-semidefinite Gram matrices (Markov-Lukacs).
//! * [`conic`] — a dense ADMM solver for the per-iteration convex
//!   subproblem (quadratic objective, affine constraints, PSD cones).
//! * [`optimizer`] — the two-layer loop: outer Dinkelbach update of the
//!   efficiency parameter, inner Gauss-Newton/SCA iterations.
//! * [`baselines`] — uniform, binary, sinusoidal, and trapezoidal
//!   comparison profiles.
//! * [`sensing`] — the DoA signal model, Cramer-Rao bound, and a
//!   Monte-Carlo maximum-likelihood validation harness.

pub mod baselines;
pub mod config;
pub mod conic;
pub mod error;
pub mod functionals;
pub mod optimizer;
pub mod sensing;
pub mod sos;
pub mod spectral;
pub mod util;

pub use config::ProblemConfig;
pub use error::Error;
