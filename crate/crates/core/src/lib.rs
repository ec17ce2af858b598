//! Controller synthesis from demonstrations.
//!
//! This crate learns a control-Lyapunov function together with an LQR
//! switching feedback law from trajectories produced by a demonstrator.
//! The switching controller tracks a stored demonstration with a
//! time-varying LQR gain schedule, re-assigns its target whenever the
//! Lyapunov candidate has decreased sufficiently, and hands off to a
//! fixed equilibrium LQR near the origin. Sampling-based falsification
//! drives both candidate refinement and the growth of the demonstration
//! database until the controller survives a configurable number of
//! consecutive random tests.
//!
//! Module map:
//! - [`dynamics`]: control systems, the RK4 integrator, regions, benchmarks
//! - [`demonstrator`]: iLQR trajectory optimizer producing discrete demonstrations
//! - [`lqr_tracking`]: Riccati gain schedules and tracking / equilibrium LQR laws
//! - [`clf_learner`]: polynomial candidates, inequality store, Chebyshev-center LP
//! - [`falsifier`]: differential-evolution positivity falsifier and decrease sampler
//! - [`switching`]: demonstration database, assignment rule, switching controller
//! - [`synthesis`]: the outer synthesis loop, checkpointing, reports
//! - [`eval`]: closed-loop cost evaluation and the Sontag-formula baseline

pub mod clf_learner;
pub mod demonstrator;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod falsifier;
pub mod lqr_tracking;
pub mod switching;
pub mod synthesis;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
