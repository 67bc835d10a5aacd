//! Sampling-based stochastic optimal control for teams of point-mass vehicles.
//!
//! The crate plans 2D accelerations for M agents with double-integrator
//! dynamics by Monte Carlo path-integral control: rollouts are sampled around
//! an importance-control sequence, weighted by their exponentiated path cost,
//! and the weighted noise average becomes the next control update. Replanning
//! at a fixed frequency turns the open-loop update into a receding-horizon
//! controller that hands target velocities to a (simulated) low-level layer.
//!
//! Alongside the sampler there is an iLQG trajectory optimizer used as the
//! deterministic baseline, a finite-horizon LQR solver used as an independent
//! reference on linear-quadratic instances, three scenario cost families
//! (obstacle corridor, holding pattern, pursuit-evasion), a closed-loop
//! simulator with wind and tracking-lag disturbances, and a declarative
//! experiment runner that sweeps seeds and parameter grids into result tables.

pub mod costs;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod ilqg;
pub mod pi;
pub mod riccati;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
