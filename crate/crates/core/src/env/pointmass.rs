use rand::Rng;

use super::{Action, ActionSpace, EnvState, Environment, StepResult};
use crate::error::{contract, Result};
use crate::rng::Stream;

const DT: f64 = 0.05;
const MAX_SPEED: f64 = 2.0;
const TIME_LIMIT: usize = 200;
const ACTION_COST: f64 = 0.01;

/// A unit mass in the plane pushed by a bounded acceleration toward a goal
/// at the origin.
///
/// Observation is `(px, py, vx, vy)`. Actions outside `[-1, 1]²` are clamped
/// and the step result reports it. The reward uses the position after the
/// step. There is no terminal state; episodes truncate after 200 steps.
#[derive(Debug, Clone)]
pub struct PointMass {
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    steps: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        Self { pos: [0.0; 2], vel: [0.0; 2], goal: [0.0; 2], steps: 0 }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Environment for PointMass {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { low: vec![-1.0; 2], high: vec![1.0; 2] }
    }

    fn reset(&mut self, rng: &mut Stream) -> Vec<f64> {
        let pos = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        self.set_state(pos, [0.0; 2]);
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let raw = match action {
            Action::Continuous(a) if a.len() == 2 && a.iter().all(|v| v.is_finite()) => a,
            other => return Err(contract(format!("pointmass takes a finite 2-vector action, got {other:?}"))),
        };
        let mut clamped = false;
        let mut acc = [0.0; 2];
        for (d, &a) in raw.iter().enumerate() {
            acc[d] = a.clamp(-1.0, 1.0);
            clamped |= acc[d] != a;
        }
        for d in 0..2 {
            self.vel[d] = (self.vel[d] + DT * acc[d]).clamp(-MAX_SPEED, MAX_SPEED);
            self.pos[d] += DT * self.vel[d];
        }
        self.steps += 1;
        let dist = ((self.pos[0] - self.goal[0]).powi(2) + (self.pos[1] - self.goal[1]).powi(2)).sqrt();
        let effort = acc[0] * acc[0] + acc[1] * acc[1];
        Ok(StepResult {
            next_observation: self.observation(),
            reward: -dist - ACTION_COST * effort,
            terminal: false,
            truncated: self.steps >= TIME_LIMIT,
            clamped,
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: self.observation(), terminal: false, steps_elapsed: self.steps }
    }

    fn binary_rewards(&self) -> bool {
        false
    }
}
