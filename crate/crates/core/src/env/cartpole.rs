use rand::Rng;

use super::{Action, ActionSpace, EnvState, Environment, StepResult};
use crate::error::{contract, Result};
use crate::rng::Stream;

/// Physical constants for [`CartPole`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub pole_half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub theta_limit: f64,
    pub x_limit: f64,
    pub time_limit: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            theta_limit: 12.0_f64.to_radians(),
            x_limit: 2.4,
            time_limit: 500,
        }
    }
}

/// Cart-pole balancing with explicit Euler integration.
///
/// State is `(x, ẋ, θ, θ̇)`. Action 0 pushes left, 1 pushes right. Each step
/// that does not end the episode pays 1; the terminating step pays 0.
#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    state: [f64; 4],
    steps: usize,
    terminal: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        Self::with_params(CartPoleParams::default())
    }

    pub fn with_params(params: CartPoleParams) -> Self {
        Self { params, state: [0.0; 4], steps: 0, terminal: false }
    }

    /// Places the system in an explicit state, resetting the step counter.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.terminal = false;
    }

    pub fn raw_state(&self) -> [f64; 4] {
        self.state
    }

    fn out_of_bounds(&self) -> bool {
        self.state[0].abs() > self.params.x_limit || self.state[2].abs() > self.params.theta_limit
    }
}

impl Environment for CartPole {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn reset(&mut self, rng: &mut Stream) -> Vec<f64> {
        let state = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        self.set_state(state);
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let p = &self.params;
        let force = match action {
            Action::Discrete(0) => -p.force_mag,
            Action::Discrete(1) => p.force_mag,
            other => return Err(contract(format!("cartpole takes a discrete action in {{0, 1}}, got {other:?}"))),
        };
        let [x, x_dot, theta, theta_dot] = self.state;
        let total_mass = p.cart_mass + p.pole_mass;
        let pole_moment = p.pole_mass * p.pole_half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pole_moment * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc =
            (p.gravity * sin - cos * temp) / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
        self.state = [x + p.dt * x_dot, x_dot + p.dt * x_acc, theta + p.dt * theta_dot, theta_dot + p.dt * theta_acc];
        self.steps += 1;
        self.terminal = self.out_of_bounds();
        let truncated = !self.terminal && self.steps >= p.time_limit;
        Ok(StepResult {
            next_observation: self.state.to_vec(),
            reward: if self.terminal { 0.0 } else { 1.0 },
            terminal: self.terminal,
            truncated,
            clamped: false,
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: self.state.to_vec(), terminal: self.terminal, steps_elapsed: self.steps }
    }

    fn binary_rewards(&self) -> bool {
        true
    }
}
