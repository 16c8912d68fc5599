//! Multi-agent airspace simulation and observation-robust PPO for small UAS
//! separation assurance.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: two-route structured airspace, point-mass kinematics, Poisson
//!   traffic, true rewards and separation events.
//! - [`observation`]: ownship-centred state matrices, box-bounded corruption
//!   and the R-contamination observation kernel.
//! - [`net`]: a small attention actor-critic with hand-written reverse-mode
//!   gradients (parameters and inputs) and a portable checkpoint format.
//! - [`adversary`]: the closed-form first-order worst-case perturbation and
//!   brute-force oracles that certify it.
//! - [`trainer`]: nominal PPO pretraining and robust PPO with invariance and
//!   teacher-anchor KL regularisers.
//! - [`bounds`]: exact finite-MDP evaluation and checks of the KL-based
//!   performance bounds.
//! - [`eval`]: paired evaluation sweeps over corruption rates and the
//!   randomized verification suites.

pub mod adversary;
pub mod bounds;
pub mod config;
pub mod error;
pub mod eval;
pub mod net;
pub mod observation;
pub mod rng;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
