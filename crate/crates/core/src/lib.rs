//! Policy-gradient reinforcement learning with symmetric objectives.
//!
//! The crate implements A2C and PPO together with their reverse-loss
//! regularized variants (SA2C and SPPO). The reverse term borrows the idea of
//! reverse cross entropy from noisy-label classification: it penalizes the
//! probability mass that the policy places on actions other than the sampled
//! one, scaled by the magnitude of the advantage, with `log 0` replaced by a
//! negative constant `Z`.
//!
//! Layout:
//!
//! * [`kernel`]: a small dense network with manual backpropagation, a
//!   central-difference gradient oracle and an Adam optimizer.
//! * [`policy`]: categorical and factorized action distributions, plus the
//!   uniform discretizer used for continuous action spaces.
//! * [`losses`]: sample-wise A2C / RA2C / PPO / RPPO losses, their weighted
//!   combination and closed-form gradients with respect to the logits.
//! * [`advantage`]: GAE, advantage normalization and sign-flip telemetry.
//! * [`env`]: toy environments and reward-noise channels.
//! * [`trainer`]: rollout collection and the A2C / PPO update loops.
//! * [`experiment`]: config files, seeded sweeps, summaries, comparisons and
//!   the built-in verification suites behind the `symrl` binary.

pub mod advantage;
pub mod env;
mod error;
pub mod experiment;
pub mod kernel;
pub mod losses;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
