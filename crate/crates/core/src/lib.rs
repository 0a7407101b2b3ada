//! Model-based optimistic learning for mean-field control of a swarm on the
//! unit circle.
//!
//! The population is a histogram on a uniform grid ([`torus`]) that is pushed
//! forward by a Gaussian transition kernel ([`flow`]). The swarm environment
//! ([`swarm`]) supplies the true drift and the reward. A Gaussian-process
//! model of the drift ([`gp`]) feeds a planner ([`planner`]) that optimizes a
//! policy jointly with an auxiliary control choosing dynamics inside the
//! model's confidence band. [`driver`] runs the outer learning loop and
//! records per-episode metrics, [`config`] parses run files and [`cli`] backs
//! the `mfucrl` binary.

pub mod checks;
pub mod cli;
pub mod config;
pub mod driver;
pub mod error;
pub mod flow;
pub mod gp;
pub mod planner;
pub mod seed;
pub mod swarm;
pub mod torus;

pub use error::{Error, Result};
