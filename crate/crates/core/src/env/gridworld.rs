use super::{Action, ActionSpace, EnvState, Environment, StepResult};
use crate::error::{contract, Result};
use crate::rng::Stream;

const SIZE: i32 = 8;
const TIME_LIMIT: usize = 64;

/// 8×8 grid, start in one corner and goal in the opposite one.
///
/// Actions: 0 up (+y), 1 down (−y), 2 left (−x), 3 right (+x). Moves into
/// the outer wall leave the agent in place. Reaching the goal pays 1 and ends
/// the episode; every other step pays 0. Episodes are truncated after 64
/// steps. Observations are agent and goal coordinates scaled to `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Gridworld {
    agent: (i32, i32),
    goal: (i32, i32),
    start: (i32, i32),
    steps: usize,
    terminal: bool,
}

impl Default for Gridworld {
    fn default() -> Self {
        Self::new()
    }
}

impl Gridworld {
    pub fn new() -> Self {
        Self::with_positions((0, 0), (SIZE - 1, SIZE - 1))
    }

    /// Custom start and goal cells; `reset` returns to `start`.
    pub fn with_positions(start: (i32, i32), goal: (i32, i32)) -> Self {
        Self { agent: start, goal, start, steps: 0, terminal: false }
    }

    pub fn agent(&self) -> (i32, i32) {
        self.agent
    }

    fn observation(&self) -> Vec<f64> {
        let scale = |v: i32| 2.0 * v as f64 / (SIZE - 1) as f64 - 1.0;
        vec![scale(self.agent.0), scale(self.agent.1), scale(self.goal.0), scale(self.goal.1)]
    }
}

impl Environment for Gridworld {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn reset(&mut self, _rng: &mut Stream) -> Vec<f64> {
        self.agent = self.start;
        self.steps = 0;
        self.terminal = false;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let (dx, dy) = match action {
            Action::Discrete(0) => (0, 1),
            Action::Discrete(1) => (0, -1),
            Action::Discrete(2) => (-1, 0),
            Action::Discrete(3) => (1, 0),
            other => return Err(contract(format!("gridworld takes a discrete action in [0, 4), got {other:?}"))),
        };
        let x = (self.agent.0 + dx).clamp(0, SIZE - 1);
        let y = (self.agent.1 + dy).clamp(0, SIZE - 1);
        self.agent = (x, y);
        self.steps += 1;
        self.terminal = self.agent == self.goal;
        let truncated = !self.terminal && self.steps >= TIME_LIMIT;
        Ok(StepResult {
            next_observation: self.observation(),
            reward: if self.terminal { 1.0 } else { 0.0 },
            terminal: self.terminal,
            truncated,
            clamped: false,
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: self.observation(), terminal: self.terminal, steps_elapsed: self.steps }
    }

    fn binary_rewards(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn stepping_onto_goal_pays_and_terminates() {
        let mut env = Gridworld::with_positions((6, 7), (7, 7));
        env.reset(&mut seeded(0));
        let r = env.step(&Action::Discrete(3)).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.terminal && !r.truncated);
    }

    #[test]
    fn walls_block() {
        let mut env = Gridworld::new();
        env.reset(&mut seeded(0));
        let r = env.step(&Action::Discrete(2)).unwrap();
        assert_eq!(env.agent(), (0, 0));
        assert_eq!(r.reward, 0.0);
        env.step(&Action::Discrete(1)).unwrap();
        assert_eq!(env.agent(), (0, 0));
    }

    #[test]
    fn optimal_corner_to_corner_takes_fourteen_steps() {
        let mut env = Gridworld::new();
        env.reset(&mut seeded(0));
        let mut ret = 0.0;
        let mut steps = 0;
        for a in [3; 7].into_iter().chain([0; 7]) {
            let r = env.step(&Action::Discrete(a)).unwrap();
            ret += r.reward;
            steps += 1;
            if r.done() {
                break;
            }
        }
        assert_eq!(steps, 14);
        assert_eq!(ret, 1.0);
        assert!(env.state().terminal);
    }

    #[test]
    fn truncates_after_time_limit() {
        let mut env = Gridworld::new();
        env.reset(&mut seeded(0));
        for t in 1..=TIME_LIMIT {
            let r = env.step(&Action::Discrete(2)).unwrap();
            assert_eq!(r.truncated, t == TIME_LIMIT);
        }
    }

    #[test]
    fn invalid_action() {
        let mut env = Gridworld::new();
        env.reset(&mut seeded(0));
        assert!(matches!(env.step(&Action::Discrete(4)), Err(crate::Error::Contract(_))));
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }
}
