//! On-policy actor-critic training.
//!
//! One [`Trainer`] owns a shared-trunk network (one categorical head per
//! action dimension plus a scalar value head), `n_envs` environment copies
//! with their own random streams, and an Adam optimizer. Each call to
//! [`Trainer::update`] collects `n_envs × n_steps` transitions and then runs
//! either one full-batch A2C step or several PPO epochs over shuffled
//! minibatches.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::{compute_gae, normalize_advantages, GaeConfig};
use crate::env::{Action, ActionSpace, EnvKind, Environment, NoiseChannel, NoiseKind};
use crate::error::{contract, numeric, Error, Result};
use crate::kernel::{
    backward_into, clip_global_norm, compare_gradients, forward_trace, l2_norm, orthogonal_init, Adam, AdamConfig,
    NetworkSpec, ParameterVector, Trace,
};
use crate::losses::{factorized_loss_and_gradient, Algorithm, FactorizedSample, LossValue, SymmetricLossConfig};
use crate::policy::{ActionDistribution, Discretizer};
use crate::rng::{stream, Purpose, Stream};

const RETURN_WINDOW: usize = 10;
const PROBE_STEP: f64 = 1e-5;
const PROBE_TOLERANCE: f64 = 1e-3;
const PROBE_FLOOR: f64 = 1e-6;
const PROBE_COORDINATES: usize = 3;

/// How the policy gradient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPath {
    /// `α · forward + β · reverse` through the symmetric loss module.
    #[default]
    Symmetric,
    /// A separate implementation of the plain A2C / PPO gradient. Requires `β = 0`.
    ForwardOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub loss: SymmetricLossConfig,
    pub path: LossPath,
    pub gae: GaeConfig,
    pub n_envs: usize,
    pub n_steps: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub total_updates: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Multiplies the (noisy) training rewards before advantage estimation.
    pub reward_scale: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Widths of the shared tanh trunk.
    pub hidden: Vec<usize>,
    /// Bins per dimension when the action space is continuous.
    pub bins: usize,
    pub seed: u64,
    /// Check every optimizer step against finite differences on a few coordinates.
    pub debug_gradient_probe: bool,
}

impl TrainerConfig {
    /// A2C defaults: 4 envs × 8 steps, one full-batch step per update.
    pub fn a2c() -> Self {
        Self {
            loss: SymmetricLossConfig::plain(Algorithm::A2c),
            path: LossPath::Symmetric,
            gae: GaeConfig::default(),
            n_envs: 4,
            n_steps: 8,
            epochs_per_update: 1,
            minibatch_size: 32,
            learning_rate: 7e-4,
            total_updates: 1000,
            entropy_coef: 0.0,
            value_coef: 0.5,
            reward_scale: 1.0,
            max_grad_norm: Some(0.5),
            hidden: vec![64, 64],
            bins: 11,
            seed: 0,
            debug_gradient_probe: false,
        }
    }

    /// PPO defaults: 4 envs × 128 steps, 4 epochs of 128-sample minibatches,
    /// per-minibatch advantage normalization.
    pub fn ppo() -> Self {
        Self {
            loss: SymmetricLossConfig::plain(Algorithm::Ppo),
            gae: GaeConfig { normalize: true, ..GaeConfig::default() },
            n_steps: 128,
            epochs_per_update: 4,
            minibatch_size: 128,
            learning_rate: 3e-4,
            total_updates: 100,
            ..Self::a2c()
        }
    }

    /// A2C defaults with the symmetric loss at `α = 0.5` and the given `β`.
    pub fn sa2c(beta: f64) -> Self {
        Self { loss: SymmetricLossConfig::sa2c(beta), ..Self::a2c() }
    }

    /// PPO defaults with the symmetric loss at `α = 0.5` and the given `β`.
    pub fn sppo(beta: f64) -> Self {
        Self { loss: SymmetricLossConfig::sppo(beta), ..Self::ppo() }
    }

    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::A2c => Self::a2c(),
            Algorithm::Ppo => Self::ppo(),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.loss.algorithm
    }

    pub fn batch_size(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.gae.validate()?;
        if self.n_envs == 0 || self.n_steps == 0 {
            return Err(contract("n_envs and n_steps must be positive"));
        }
        if self.path == LossPath::ForwardOnly && self.loss.beta != 0.0 {
            return Err(contract("the forward-only loss path requires beta = 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(contract("learning_rate must be positive"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(contract("reward_scale must be positive"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(contract("entropy_coef and value_coef must be non-negative"));
        }
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0) {
                return Err(contract("max_grad_norm must be positive when set"));
            }
        }
        if self.hidden.contains(&0) {
            return Err(contract("hidden widths must be positive"));
        }
        if self.bins < 2 {
            return Err(contract("bins must be at least 2"));
        }
        if self.algorithm() == Algorithm::Ppo {
            if self.epochs_per_update == 0 || self.minibatch_size == 0 {
                return Err(contract("epochs_per_update and minibatch_size must be positive"));
            }
            if self.batch_size() % self.minibatch_size != 0 {
                return Err(contract(format!(
                    "minibatch_size {} must divide the batch size {}",
                    self.minibatch_size,
                    self.batch_size()
                )));
            }
            if self.gae.normalize && self.minibatch_size < 2 {
                return Err(contract("advantage normalization needs minibatches of at least 2"));
            }
        } else if self.gae.normalize && self.batch_size() < 2 {
            return Err(contract("advantage normalization needs at least 2 samples"));
        }
        Ok(())
    }
}

/// Policy and value function on a shared trunk.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    spec: NetworkSpec,
    params: ParameterVector,
    action_dims: Vec<usize>,
    discretizer: Option<Discretizer>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        observation_dim: usize,
        action_space: &ActionSpace,
        hidden: &[usize],
        bins: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (action_dims, discretizer) = match action_space {
            ActionSpace::Discrete(k) => (vec![*k], None),
            ActionSpace::Continuous { low, high } => {
                let d = Discretizer::new(low.clone(), high.clone(), vec![bins; low.len()])?;
                (vec![bins; low.len()], Some(d))
            }
        };
        let names: Vec<String> = if action_dims.len() == 1 {
            vec!["policy".to_string()]
        } else {
            (0..action_dims.len()).map(|d| format!("policy{d}")).collect()
        };
        let mut heads: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(action_dims.iter().copied()).collect();
        heads.push(("value", 1));
        let spec = NetworkSpec::mlp(observation_dim, hidden, &heads)?;
        let params = orthogonal_init(&spec, 1.0, |name| if name == "value" { 1.0 } else { 0.01 }, rng);
        Ok(Self { spec, params, action_dims, discretizer })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn action_dims(&self) -> &[usize] {
        &self.action_dims
    }

    /// Per-dimension action distributions and the value estimate.
    pub fn evaluate(&self, observation: &[f64]) -> Result<(Vec<ActionDistribution>, f64)> {
        let trace = forward_trace(&self.spec, &self.params, observation)?;
        self.read_heads(&trace)
    }

    fn read_heads(&self, trace: &Trace) -> Result<(Vec<ActionDistribution>, f64)> {
        let n = self.action_dims.len();
        let dists =
            (0..n).map(|d| ActionDistribution::from_logits(trace.head(d).to_vec())).collect::<Result<Vec<_>>>()?;
        Ok((dists, trace.head(n)[0]))
    }

    /// Maps per-dimension indices to the environment's action type.
    pub fn to_env_action(&self, indices: &[usize]) -> Result<Action> {
        match &self.discretizer {
            None => Ok(Action::Discrete(indices[0])),
            Some(d) => Ok(Action::Continuous(d.decode(indices)?)),
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, observation: &[f64], rng: &mut R, greedy: bool) -> Result<Action> {
        let (dists, _) = self.evaluate(observation)?;
        let indices: Vec<usize> = dists.iter().map(|d| if greedy { d.mode() } else { d.sample(rng) }).collect();
        self.to_env_action(&indices)
    }
}

/// Rollout storage, time-major: sample `t * n_envs + e` is step `t` of env `e`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionBatch {
    pub n_envs: usize,
    pub n_steps: usize,
    pub observations: Vec<Vec<f64>>,
    /// One index per action dimension.
    pub action_indices: Vec<Vec<usize>>,
    /// Behaviour probability of each chosen index, per dimension.
    pub old_probs: Vec<Vec<f64>>,
    pub clean_rewards: Vec<f64>,
    pub noisy_rewards: Vec<f64>,
    pub value_predictions: Vec<f64>,
    pub dones: Vec<bool>,
    /// `γ V(s_T)` for steps that hit a time limit, zero elsewhere.
    pub truncation_bootstrap: Vec<f64>,
    /// `V` of each env's observation after the last step.
    pub last_values: Vec<f64>,
    /// Clean returns of episodes that finished during the rollout.
    pub completed_returns: Vec<f64>,
    pub clamped_actions: usize,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// One record of the per-update metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    pub env_steps: u64,
    /// Mean clean return of the last completed training episodes.
    pub mean_return_clean: Option<f64>,
    pub loss_forward: f64,
    pub loss_reverse: f64,
    pub loss_value: f64,
    pub entropy: f64,
    /// Only present when advantage normalization is enabled.
    pub adv_sign_flip_rate: Option<f64>,
    pub clipped_fraction: f64,
    /// Pre-clip global gradient norm, averaged over optimizer steps.
    pub grad_norm: f64,
    pub seconds: Option<f64>,
    pub clamped_actions: usize,
    /// Clean returns of the evaluation episodes run after this update, if any.
    pub eval_returns: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub standard_error: f64,
    pub returns: Vec<f64>,
}

/// Sample mean and standard error (sample standard deviation over `√n`; zero for `n = 1`).
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `episodes` clean-reward episodes with the given action rule.
pub fn evaluate<F>(env: &mut dyn Environment, episodes: usize, rng: &mut Stream, mut act: F) -> Result<Evaluation>
where
    F: FnMut(&[f64], &mut Stream) -> Result<Action>,
{
    const MAX_EPISODE_STEPS: usize = 100_000;
    if episodes == 0 {
        return Err(contract("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let action = act(&obs, rng)?;
            let r = env.step(&action)?;
            total += r.reward;
            steps += 1;
            if r.done() {
                break;
            }
            if steps >= MAX_EPISODE_STEPS {
                return Err(contract("evaluation episode did not end"));
            }
            obs = r.next_observation;
        }
        returns.push(total);
    }
    let (mean, standard_error) = mean_and_standard_error(&returns);
    Ok(Evaluation { mean, standard_error, returns })
}

type EnvFactory = Arc<dyn Fn() -> Box<dyn Environment> + Send + Sync>;

#[derive(Debug, Default, Clone, Copy)]
struct MinibatchStats {
    total: f64,
    forward: f64,
    reverse: f64,
    value: f64,
    entropy: f64,
    clipped: usize,
}

pub struct Trainer {
    cfg: TrainerConfig,
    policy: ActorCritic,
    optimizer: Adam,
    make_env: EnvFactory,
    envs: Vec<Box<dyn Environment>>,
    observations: Vec<Vec<f64>>,
    running_returns: Vec<f64>,
    reset_rngs: Vec<Stream>,
    action_rngs: Vec<Stream>,
    noise: Vec<NoiseChannel>,
    shuffle_rng: Stream,
    probe_rng: Stream,
    recent_returns: VecDeque<f64>,
    updates_done: usize,
    env_steps: u64,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, env: EnvKind, noise: NoiseKind) -> Result<Self> {
        Self::with_env_factory(cfg, move || env.make(), noise)
    }

    /// Trains on environments built by `make_env` (one per worker, plus one per evaluation).
    pub fn with_env_factory(
        cfg: TrainerConfig,
        make_env: impl Fn() -> Box<dyn Environment> + Send + Sync + 'static,
        noise: NoiseKind,
    ) -> Result<Self> {
        cfg.validate()?;
        noise.validate()?;
        let make_env: EnvFactory = Arc::new(make_env);
        let mut envs: Vec<Box<dyn Environment>> = (0..cfg.n_envs).map(|_| make_env()).collect();
        if noise.requires_binary_rewards() && !envs[0].binary_rewards() {
            return Err(Error::Validation("bsc noise needs an environment with {0, 1} rewards".into()));
        }
        let seed = cfg.seed;
        let mut init_rng = stream(seed, Purpose::Init, 0);
        let policy =
            ActorCritic::new(envs[0].observation_dim(), &envs[0].action_space(), &cfg.hidden, cfg.bins, &mut init_rng)?;
        let optimizer = Adam::new(
            AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() },
            policy.spec().param_count(),
        );
        let mut reset_rngs: Vec<Stream> = (0..cfg.n_envs).map(|e| stream(seed, Purpose::EnvReset, e as u64)).collect();
        let observations = envs.iter_mut().zip(&mut reset_rngs).map(|(env, rng)| env.reset(rng)).collect();
        Ok(Self {
            action_rngs: (0..cfg.n_envs).map(|e| stream(seed, Purpose::ActionSampling, e as u64)).collect(),
            noise: (0..cfg.n_envs).map(|e| NoiseChannel::new(noise, stream(seed, Purpose::Noise, e as u64))).collect(),
            shuffle_rng: stream(seed, Purpose::Shuffle, 0),
            probe_rng: stream(seed, Purpose::Probe, 0),
            running_returns: vec![0.0; cfg.n_envs],
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
            updates_done: 0,
            env_steps: 0,
            cfg,
            policy,
            optimizer,
            make_env,
            envs,
            observations,
            reset_rngs,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &ActorCritic {
        &self.policy
    }

    pub fn params(&self) -> &ParameterVector {
        self.policy.params()
    }

    pub fn updates_done(&self) -> usize {
        self.updates_done
    }

    /// Steps every environment `n_steps` times under the current policy.
    pub fn collect_rollout(&mut self) -> Result<TransitionBatch> {
        let (n_envs, n_steps) = (self.cfg.n_envs, self.cfg.n_steps);
        let cap = n_envs * n_steps;
        let mut batch = TransitionBatch {
            n_envs,
            n_steps,
            observations: Vec::with_capacity(cap),
            action_indices: Vec::with_capacity(cap),
            old_probs: Vec::with_capacity(cap),
            clean_rewards: Vec::with_capacity(cap),
            noisy_rewards: Vec::with_capacity(cap),
            value_predictions: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            truncation_bootstrap: Vec::with_capacity(cap),
            ..Default::default()
        };
        for _ in 0..n_steps {
            for e in 0..n_envs {
                let obs = std::mem::take(&mut self.observations[e]);
                let (dists, value) = self.policy.evaluate(&obs)?;
                let indices: Vec<usize> = dists.iter().map(|d| d.sample(&mut self.action_rngs[e])).collect();
                let old: Vec<f64> = dists.iter().zip(&indices).map(|(d, &i)| d.prob(i)).collect();
                let step = self.envs[e].step(&self.policy.to_env_action(&indices)?)?;
                let noisy = self.noise[e].apply(step.reward)?;
                self.running_returns[e] += step.reward;
                let bootstrap = if step.truncated {
                    self.cfg.gae.gamma * self.policy.evaluate(&step.next_observation)?.1
                } else {
                    0.0
                };
                batch.clamped_actions += usize::from(step.clamped);
                let done = step.done();
                if done {
                    batch.completed_returns.push(std::mem::take(&mut self.running_returns[e]));
                    self.observations[e] = self.envs[e].reset(&mut self.reset_rngs[e]);
                } else {
                    self.observations[e] = step.next_observation;
                }
                batch.observations.push(obs);
                batch.action_indices.push(indices);
                batch.old_probs.push(old);
                batch.clean_rewards.push(step.reward);
                batch.noisy_rewards.push(noisy);
                batch.value_predictions.push(value);
                batch.dones.push(done);
                batch.truncation_bootstrap.push(bootstrap);
            }
        }
        batch.last_values =
            self.observations.iter().map(|o| self.policy.evaluate(o).map(|(_, v)| v)).collect::<Result<Vec<_>>>()?;
        Ok(batch)
    }

    /// Raw GAE advantages and return targets on the noisy rewards, per env.
    pub fn advantages(&self, batch: &TransitionBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n_envs, n_steps) = (batch.n_envs, batch.n_steps);
        if batch.len() != n_envs * n_steps || batch.last_values.len() != n_envs {
            return Err(contract("malformed transition batch"));
        }
        let gae = GaeConfig { normalize: false, ..self.cfg.gae };
        let mut advantages = vec![0.0; batch.len()];
        let mut returns = vec![0.0; batch.len()];
        for e in 0..n_envs {
            let idx: Vec<usize> = (0..n_steps).map(|t| t * n_envs + e).collect();
            let rewards: Vec<f64> = idx
                .iter()
                .map(|&i| self.cfg.reward_scale * batch.noisy_rewards[i] + batch.truncation_bootstrap[i])
                .collect();
            let values: Vec<f64> = idx.iter().map(|&i| batch.value_predictions[i]).collect();
            let dones: Vec<bool> = idx.iter().map(|&i| batch.dones[i]).collect();
            let est = compute_gae(&rewards, &values, batch.last_values[e], &dones, &gae)?;
            for (k, &i) in idx.iter().enumerate() {
                advantages[i] = est.raw[k];
                returns[i] = est.returns[k];
            }
        }
        Ok((advantages, returns))
    }

    /// One full-batch step on the batch (no shuffling, one epoch).
    pub fn a2c_update(&mut self, batch: &TransitionBatch) -> Result<UpdateMetrics> {
        if self.cfg.algorithm() != Algorithm::A2c {
            return Err(contract("a2c_update called with a PPO config"));
        }
        self.optimize(batch, 1, batch.len(), false)
    }

    /// `epochs_per_update` passes over seeded shuffled minibatches.
    pub fn ppo_update(&mut self, batch: &TransitionBatch) -> Result<UpdateMetrics> {
        if self.cfg.algorithm() != Algorithm::Ppo {
            return Err(contract("ppo_update called with an A2C config"));
        }
        self.optimize(batch, self.cfg.epochs_per_update, self.cfg.minibatch_size, true)
    }

    /// Collects a rollout and applies the configured update.
    pub fn update(&mut self) -> Result<UpdateMetrics> {
        let batch = self.collect_rollout()?;
        let mut metrics = match self.cfg.algorithm() {
            Algorithm::A2c => self.a2c_update(&batch)?,
            Algorithm::Ppo => self.ppo_update(&batch)?,
        };
        for &r in &batch.completed_returns {
            if self.recent_returns.len() == RETURN_WINDOW {
                self.recent_returns.pop_front();
            }
            self.recent_returns.push_back(r);
        }
        self.env_steps += batch.len() as u64;
        metrics.update = self.updates_done;
        metrics.env_steps = self.env_steps;
        metrics.mean_return_clean = if self.recent_returns.is_empty() {
            None
        } else {
            Some(self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64)
        };
        metrics.clamped_actions = batch.clamped_actions;
        self.updates_done += 1;
        Ok(metrics)
    }

    /// Clean-reward evaluation on a fresh environment; `index` selects the random stream.
    pub fn evaluate(&self, episodes: usize, index: u64, greedy: bool) -> Result<Evaluation> {
        let mut env = (self.make_env)();
        let mut rng = stream(self.cfg.seed, Purpose::Evaluation, index);
        evaluate(env.as_mut(), episodes, &mut rng, |obs, rng| self.policy.act(obs, rng, greedy))
    }

    /// Gradient of the minibatch loss at the current parameters (before clipping).
    pub fn loss_gradient(
        &self,
        batch: &TransitionBatch,
        indices: &[usize],
        advantages: &[f64],
        returns: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.policy.params.len()];
        let stats = self.objective(self.policy.params(), batch, indices, advantages, returns, Some(&mut grad))?;
        Ok((stats.total, grad))
    }

    fn optimize(
        &mut self,
        batch: &TransitionBatch,
        epochs: usize,
        minibatch: usize,
        shuffle: bool,
    ) -> Result<UpdateMetrics> {
        let (advantages, returns) = self.advantages(batch)?;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut acc = MinibatchStats::default();
        let (mut steps, mut samples) = (0usize, 0usize);
        let mut grad_norm_sum = 0.0;
        let mut flip_rates = Vec::new();
        for _ in 0..epochs {
            if shuffle {
                order.shuffle(&mut self.shuffle_rng);
            }
            for chunk in order.chunks(minibatch) {
                let raw: Vec<f64> = chunk.iter().map(|&b| advantages[b]).collect();
                let adv = if self.cfg.gae.normalize {
                    let (norm, rate) = normalize_advantages(&raw, self.cfg.gae.norm_epsilon)?;
                    flip_rates.push(rate);
                    norm
                } else {
                    raw
                };
                let mut grad = vec![0.0; self.policy.params.len()];
                let stats = self.objective(self.policy.params(), batch, chunk, &adv, &returns, Some(&mut grad))?;
                if self.cfg.debug_gradient_probe {
                    self.probe(batch, chunk, &adv, &returns, &grad)?;
                }
                let norm = match self.cfg.max_grad_norm {
                    Some(max) => clip_global_norm(&mut grad, max),
                    None => l2_norm(&grad),
                };
                if !norm.is_finite() {
                    return Err(numeric("gradient norm is not finite"));
                }
                self.optimizer.step(self.policy.params.values_mut(), &grad);
                acc.forward += stats.forward;
                acc.reverse += stats.reverse;
                acc.value += stats.value;
                acc.entropy += stats.entropy;
                acc.clipped += stats.clipped;
                grad_norm_sum += norm;
                steps += 1;
                samples += chunk.len();
            }
        }
        let per_step = |x: f64| x / steps as f64;
        Ok(UpdateMetrics {
            update: self.updates_done,
            env_steps: self.env_steps,
            mean_return_clean: None,
            loss_forward: per_step(acc.forward),
            loss_reverse: per_step(acc.reverse),
            loss_value: per_step(acc.value),
            entropy: per_step(acc.entropy),
            adv_sign_flip_rate: if flip_rates.is_empty() {
                None
            } else {
                Some(flip_rates.iter().sum::<f64>() / flip_rates.len() as f64)
            },
            clipped_fraction: acc.clipped as f64 / samples as f64,
            grad_norm: per_step(grad_norm_sum),
            seconds: None,
            clamped_actions: batch.clamped_actions,
            eval_returns: None,
        })
    }

    fn probe(
        &mut self,
        batch: &TransitionBatch,
        idx: &[usize],
        adv: &[f64],
        returns: &[f64],
        grad: &[f64],
    ) -> Result<()> {
        let n = grad.len();
        let coords: Vec<usize> = (0..PROBE_COORDINATES).map(|_| self.probe_rng.random_range(0..n)).collect();
        let mut probe = self.policy.params.clone();
        let mut analytic = Vec::with_capacity(coords.len());
        let mut numeric_grad = Vec::with_capacity(coords.len());
        for &c in &coords {
            let orig = probe.values()[c];
            probe.values_mut()[c] = orig + PROBE_STEP;
            let up = self.objective(&probe, batch, idx, adv, returns, None)?.total;
            probe.values_mut()[c] = orig - PROBE_STEP;
            let down = self.objective(&probe, batch, idx, adv, returns, None)?.total;
            probe.values_mut()[c] = orig;
            analytic.push(grad[c]);
            numeric_grad.push((up - down) / (2.0 * PROBE_STEP));
        }
        let report = compare_gradients(&analytic, &numeric_grad, PROBE_FLOOR);
        if report.max_rel_diff > PROBE_TOLERANCE {
            let name = |c: usize| {
                let mut offset = 0;
                for l in self.policy.params.layout() {
                    if c < offset + l.numel() {
                        return l.name.clone();
                    }
                    offset += l.numel();
                }
                String::new()
            };
            return Err(numeric(format!(
                "gradient probe failed at update {}: coordinates {:?} ({}), analytic {:?}, finite difference {:?}",
                self.updates_done,
                coords,
                coords.iter().map(|&c| name(c)).collect::<Vec<_>>().join(", "),
                analytic,
                numeric_grad
            )));
        }
        Ok(())
    }

    /// Mean loss over `idx` and, if requested, its gradient accumulated into `grad`.
    fn objective(
        &self,
        params: &ParameterVector,
        batch: &TransitionBatch,
        idx: &[usize],
        adv: &[f64],
        returns: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> Result<MinibatchStats> {
        let n = idx.len() as f64;
        let cfg = &self.cfg;
        let dims = self.policy.action_dims.len();
        let mut stats = MinibatchStats::default();
        for (j, &b) in idx.iter().enumerate() {
            let trace = forward_trace(&self.policy.spec, params, &batch.observations[b])?;
            let (dists, value) = self.policy.read_heads(&trace)?;
            let actions = &batch.action_indices[b];
            let old = &batch.old_probs[b];
            let (loss, mut head_grads) = match cfg.path {
                LossPath::Symmetric => factorized_loss_and_gradient(
                    &FactorizedSample { dists: &dists, actions, advantage: adv[j], old_probs: old },
                    &cfg.loss,
                )?,
                LossPath::ForwardOnly => forward_only(&dists, actions, adv[j], old, &cfg.loss)?,
            };
            let v_err = value - returns[b];
            let entropy: f64 = dists.iter().map(ActionDistribution::entropy).sum();
            stats.total += (loss.total + cfg.value_coef * v_err * v_err - cfg.entropy_coef * entropy) / n;
            stats.forward += loss.forward_part / n;
            stats.reverse += loss.reverse_part / n;
            stats.value += v_err * v_err / n;
            stats.entropy += entropy / n;
            stats.clipped += usize::from(loss.clipped);
            if let Some(g) = grad.as_deref_mut() {
                for (d, hg) in head_grads.iter_mut().enumerate() {
                    hg.iter_mut().for_each(|x| *x /= n);
                    if cfg.entropy_coef != 0.0 {
                        // dH/dz_y = -π_y (log π_y + H)
                        let dist = &dists[d];
                        let h = dist.entropy();
                        for (y, x) in hg.iter_mut().enumerate() {
                            *x += cfg.entropy_coef * dist.prob(y) * (dist.log_prob(y) + h) / n;
                        }
                    }
                }
                let value_grad = [2.0 * cfg.value_coef * v_err / n];
                let mut refs: Vec<&[f64]> = head_grads.iter().map(Vec::as_slice).collect();
                refs.push(&value_grad);
                debug_assert_eq!(refs.len(), dims + 1);
                backward_into(&self.policy.spec, params, &trace, &refs, g)?;
            }
        }
        if !stats.total.is_finite() {
            return Err(numeric(format!("loss is not finite at update {}", self.updates_done)));
        }
        Ok(stats)
    }
}

/// Plain A2C / PPO loss and logit gradients, written independently of the
/// symmetric loss module.
fn forward_only(
    dists: &[ActionDistribution],
    actions: &[usize],
    advantage: f64,
    old_probs: &[f64],
    cfg: &SymmetricLossConfig,
) -> Result<(LossValue, Vec<Vec<f64>>)> {
    let mut grads: Vec<Vec<f64>> = dists.iter().map(|d| vec![0.0; d.k()]).collect();
    let a = advantage;
    let (loss, clipped, scale) = match cfg.algorithm {
        Algorithm::A2c => (-a * dists.iter().zip(actions).map(|(d, &i)| d.log_prob(i)).sum::<f64>(), false, 1.0),
        Algorithm::Ppo => {
            let ratio: f64 = dists.iter().zip(actions).zip(old_probs).map(|((d, &i), &o)| d.prob(i) / o).product();
            let eps = cfg.clip_epsilon;
            let surrogate = ratio * a;
            let clipped_surrogate = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            if clipped_surrogate < surrogate {
                (-clipped_surrogate, true, 0.0)
            } else {
                (-surrogate, false, ratio)
            }
        }
    };
    if a != 0.0 && !clipped {
        for ((g, d), &i) in grads.iter_mut().zip(dists).zip(actions) {
            for (y, gy) in g.iter_mut().enumerate() {
                let indicator = if y == i { 1.0 } else { 0.0 };
                *gy = cfg.alpha * a * scale * (d.prob(y) - indicator);
            }
        }
    }
    let loss = if a == 0.0 { 0.0 } else { loss };
    Ok((LossValue { total: cfg.alpha * loss, forward_part: loss, reverse_part: 0.0, clipped }, grads))
}
