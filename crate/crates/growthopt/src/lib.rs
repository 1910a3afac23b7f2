//! A small numerical laboratory for first-order methods whose step size
//! interacts with gradient noise through a strong growth condition: stochastic
//! gradient descent, its clipped variant, its normalized variant, and a
//! deterministic gradient descent with a warm-up step-size schedule.
//!
//! The crate is organized as a pipeline:
//!
//! * [`objectives`] — benchmark objective families with known optima and
//!   analytic smoothness/curvature constants;
//! * [`oracles`] — seeded stochastic gradient oracles plus estimators for the
//!   noise statistics (growth ratio, heavy-tail moments, mini-batch variance);
//! * [`optimizers`] — update rules, admissible-step and batch-size formulas,
//!   and the instrumented run loop producing full scalar traces;
//! * [`verify`] — inequality checks executed against traces and problems
//!   (descent, distance monotonicity, envelope bounds, moment inequalities)
//!   together with two-phase rate fitting;
//! * [`harness`] — config-driven experiment grids with deterministic outputs;
//! * [`trace_io`] — exact round-trip CSV for traces.
//!
//! Everything is deterministic given the configured 64-bit seeds: randomness
//! flows through counter-based streams ([`rng`]), and parallel execution
//! ([`exec`], behind the `parallel` feature) is structured so that results are
//! bit-identical to the sequential fallback.

#![forbid(unsafe_code)]

pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod optimizers;
pub mod oracles;
pub mod rng;
pub mod trace_io;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Point;
