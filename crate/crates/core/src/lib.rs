//! Model-based planning toolkit: analytic classic-control environments,
//! learned dynamics ensembles, Random Shooting / CEM / iLQG planners driven
//! in a receding-horizon loop, and a multi-seed benchmark harness.
//!
//! With the default `parallel` feature, candidate evaluation, ensemble
//! training and seed runs fan out over rayon. Every random draw is keyed by
//! an [`RngStream`] derived from the work item, never from the worker, so
//! results do not depend on the number of threads.

pub mod bench;
pub mod config;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod net;
pub mod par;
pub mod planners;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use types::{ActionVec, EnvSpec, InitDistribution, StateVec, Trajectory, Transition};
