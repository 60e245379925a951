//! Toy environments with a common stepping contract, and reward-noise
//! channels.
//!
//! Dynamics are deterministic; the only randomness is the initial-state draw
//! in [`Environment::reset`], which takes the caller's stream.

mod cartpole;
mod gridworld;
mod noise;
mod pointmass;

use serde::{Deserialize, Serialize};

pub use cartpole::{CartPole, CartPoleParams};
pub use gridworld::Gridworld;
pub use noise::{apply_noise, NoiseChannel, NoiseKind};
pub use pointmass::PointMass;

use crate::error::Result;
use crate::rng::Stream;

/// The action an environment consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// A box `[low, high]` per dimension.
    Continuous {
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub terminal: bool,
    pub steps_elapsed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Time limit reached without a terminal state.
    pub truncated: bool,
    /// The action had to be clamped into the action space.
    pub clamped: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    /// Draws an initial state and returns its observation.
    fn reset(&mut self, rng: &mut Stream) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
    fn state(&self) -> EnvState;
    /// Whether clean rewards are always 0 or 1.
    fn binary_rewards(&self) -> bool;
}

/// The environments selectable from an experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gridworld,
    Cartpole,
    Pointmass,
}

impl EnvKind {
    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Gridworld => Box::new(Gridworld::new()),
            EnvKind::Cartpole => Box::new(CartPole::new()),
            EnvKind::Pointmass => Box::new(PointMass::new()),
        }
    }

    pub fn binary_rewards(self) -> bool {
        matches!(self, EnvKind::Gridworld | EnvKind::Cartpole)
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Gridworld => "gridworld",
            EnvKind::Cartpole => "cartpole",
            EnvKind::Pointmass => "pointmass",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gridworld" => Ok(EnvKind::Gridworld),
            "cartpole" => Ok(EnvKind::Cartpole),
            "pointmass" => Ok(EnvKind::Pointmass),
            other => Err(crate::Error::Validation(format!("unknown environment `{other}`"))),
        }
    }
}
