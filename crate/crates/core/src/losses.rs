//! Sample-wise policy losses and their gradients with respect to the logits.
//!
//! Notation used below: `π` is the current action distribution, `i` the
//! sampled action, `A` its advantage, `π_old` the probability of `i` under the
//! policy that collected the sample, and `Z < 0` the constant standing in for
//! `log 0`.
//!
//! * A2C: `-A log π_i`
//! * RA2C: `Σ_{j≠i} -π_j A Z` for `A > 0` and `Σ_{j≠i} π_j A Z` for `A < 0`,
//!   i.e. `|A| |Z| (1 - π_i)` in both cases.
//! * PPO: `-min(r A, clip(r, 1-ε, 1+ε) A)` with `r = π_i / π_old`.
//! * RPPO: the RA2C sum divided by `π_old`, for samples that pass the PPO
//!   clip/min; zero otherwise.
//!
//! The symmetric objective is `α L_forward + β L_reverse`. The reverse term
//! that is optimized is `sign(A)` times the RA2C/RPPO magnitude, i.e.
//! `-A Z (1 - π_i) / π_old`. Its logit gradient is
//! `-A Z π_y (π_y - 1) / π_old` for `y = i` and `-A Z π_y π_i / π_old`
//! otherwise, for either sign of `A`, so the reverse gradient always points
//! the same way as the forward gradient and acts as an accelerator that peaks
//! at `π_y = 0.5`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, numeric, Result};
use crate::policy::ActionDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    A2c,
    Ppo,
}

/// Weights and constants of the symmetric objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricLossConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Stand-in for `log 0`; must be negative.
    pub z: f64,
    pub clip_epsilon: f64,
    pub algorithm: Algorithm,
}

impl SymmetricLossConfig {
    /// The unregularized algorithm: `α = 1`, `β = 0`.
    pub fn plain(algorithm: Algorithm) -> Self {
        Self { alpha: 1.0, beta: 0.0, z: -1.0, clip_epsilon: 0.2, algorithm }
    }

    /// SA2C with `α = 0.5` and the given `β` (5.0 without noise, 1.0 or 5.0 under BSC noise).
    pub fn sa2c(beta: f64) -> Self {
        Self { alpha: 0.5, beta, ..Self::plain(Algorithm::A2c) }
    }

    /// SPPO with `α = 0.5` and the given `β` (1.0 without noise, 10.0 under BSC noise).
    pub fn sppo(beta: f64) -> Self {
        Self { alpha: 0.5, beta, ..Self::plain(Algorithm::Ppo) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(contract(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.z < 0.0 && self.z.is_finite()) {
            return Err(contract(format!("Z must be strictly negative, got {}", self.z)));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(contract(format!("clip epsilon must lie in (0, 1), got {}", self.clip_epsilon)));
        }
        Ok(())
    }
}

impl Default for SymmetricLossConfig {
    fn default() -> Self {
        Self::plain(Algorithm::Ppo)
    }
}

/// One transition as seen by the policy loss.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a> {
    pub dist: &'a ActionDistribution,
    pub action: usize,
    pub advantage: f64,
    /// Behaviour-policy probability of `action`. Ignored by A2C.
    pub old_prob: f64,
}

impl<'a> LossSample<'a> {
    pub fn new(dist: &'a ActionDistribution, action: usize, advantage: f64) -> Self {
        Self { dist, action, advantage, old_prob: 1.0 }
    }

    pub fn with_old_prob(self, old_prob: f64) -> Self {
        Self { old_prob, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.action >= self.dist.k() {
            return Err(contract(format!("action {} out of range for k = {}", self.action, self.dist.k())));
        }
        if !self.advantage.is_finite() {
            return Err(numeric("advantage is not finite"));
        }
        Ok(())
    }

    fn check_old_prob(&self) -> Result<()> {
        if !(self.old_prob > 0.0 && self.old_prob <= 1.0) {
            return Err(contract(format!("old probability must lie in (0, 1], got {}", self.old_prob)));
        }
        Ok(())
    }

    /// Probability mass on every action except the sampled one, `Σ_{j≠i} π_j`.
    fn residual_mass(&self) -> f64 {
        self.dist.probs().iter().enumerate().filter(|&(j, _)| j != self.action).map(|(_, p)| p).sum()
    }
}

/// Components of [`symmetric_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub forward_part: f64,
    pub reverse_part: f64,
    /// PPO only: the min selected the clipped branch, so the sample carries no gradient.
    pub clipped: bool,
}

/// Unweighted logit gradients of the forward and reverse terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGradients {
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
}

/// `-A log π_i`.
pub fn a2c_loss(s: &LossSample) -> Result<f64> {
    s.check()?;
    if s.dist.prob(s.action) <= 0.0 {
        return Err(numeric("sampled action has zero probability"));
    }
    if s.advantage == 0.0 {
        return Ok(0.0);
    }
    Ok(-s.advantage * s.dist.log_prob(s.action))
}

/// Reverse A2C loss as a sum over the non-sampled actions. Zero when `A = 0`.
pub fn ra2c_loss(s: &LossSample, z: f64) -> Result<f64> {
    s.check()?;
    let a = s.advantage;
    let others = s.dist.probs().iter().enumerate().filter(|&(j, _)| j != s.action).map(|(_, &p)| p);
    Ok(if a > 0.0 {
        others.map(|p| -p * a * z).sum()
    } else if a < 0.0 {
        others.map(|p| p * a * z).sum()
    } else {
        0.0
    })
}

fn ratio_terms(s: &LossSample, eps: f64) -> (f64, bool) {
    let ratio = s.dist.prob(s.action) / s.old_prob;
    let unclipped = ratio * s.advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * s.advantage;
    if clipped < unclipped {
        (-clipped, true)
    } else {
        (-unclipped, false)
    }
}

/// Clipped PPO surrogate. The flag reports whether the min picked the clipped branch.
pub fn ppo_loss(s: &LossSample, eps: f64) -> Result<(f64, bool)> {
    s.check()?;
    s.check_old_prob()?;
    Ok(ratio_terms(s, eps))
}

/// Reverse PPO loss: `|A| |Z| (1 - π_i) / π_old` if the PPO term of the
/// same sample is unclipped, otherwise zero.
pub fn rppo_loss(s: &LossSample, z: f64, eps: f64) -> Result<f64> {
    s.check()?;
    s.check_old_prob()?;
    let (_, clipped) = ratio_terms(s, eps);
    if clipped {
        return Ok(0.0);
    }
    Ok(ra2c_loss(s, z)? / s.old_prob)
}

// sign(A) · RA2C / π_old, the reverse term that enters the objective.
fn directed_reverse(s: &LossSample, z: f64, scale: f64) -> f64 {
    if s.advantage == 0.0 {
        return 0.0;
    }
    -s.advantage * z * s.residual_mass() * scale
}

/// `α L_forward + β L_reverse` for one sample.
pub fn symmetric_loss(s: &LossSample, cfg: &SymmetricLossConfig) -> Result<LossValue> {
    cfg.validate()?;
    let (forward_part, reverse_part, clipped) = match cfg.algorithm {
        Algorithm::A2c => (a2c_loss(s)?, directed_reverse(s, cfg.z, 1.0), false),
        Algorithm::Ppo => {
            let (forward, clipped) = ppo_loss(s, cfg.clip_epsilon)?;
            let reverse = if clipped { 0.0 } else { directed_reverse(s, cfg.z, 1.0 / s.old_prob) };
            (forward, reverse, clipped)
        }
    };
    Ok(LossValue { total: cfg.alpha * forward_part + cfg.beta * reverse_part, forward_part, reverse_part, clipped })
}

/// Forward and reverse logit gradients before weighting by `α` and `β`.
pub fn logit_gradients(s: &LossSample, cfg: &SymmetricLossConfig) -> Result<LogitGradients> {
    cfg.validate()?;
    s.check()?;
    let k = s.dist.k();
    let mut forward = vec![0.0; k];
    let mut reverse = vec![0.0; k];
    let a = s.advantage;
    if a == 0.0 {
        return Ok(LogitGradients { forward, reverse });
    }
    let p = s.dist.probs();
    let i = s.action;
    let z = cfg.z;
    match cfg.algorithm {
        Algorithm::A2c => {
            if p[i] <= 0.0 {
                return Err(numeric("sampled action has zero probability"));
            }
            for y in 0..k {
                forward[y] = if y == i { a * (p[i] - 1.0) } else { a * p[y] };
                reverse[y] = if y == i { -a * z * p[y] * (p[y] - 1.0) } else { -a * z * p[y] * p[i] };
            }
        }
        Algorithm::Ppo => {
            s.check_old_prob()?;
            let (_, clipped) = ratio_terms(s, cfg.clip_epsilon);
            if !clipped {
                let old = s.old_prob;
                for y in 0..k {
                    forward[y] = if y == i { a * p[i] * (p[i] - 1.0) / old } else { a * p[i] * p[y] / old };
                    reverse[y] =
                        if y == i { -(a * z * p[y] * (p[y] - 1.0)) / old } else { -(a * z * p[y] * p[i]) / old };
                }
            }
        }
    }
    Ok(LogitGradients { forward, reverse })
}

/// Closed-form gradient of [`symmetric_loss`] with respect to the `k` logits.
pub fn analytic_logit_gradient(s: &LossSample, cfg: &SymmetricLossConfig) -> Result<Vec<f64>> {
    let LogitGradients { forward, reverse } = logit_gradients(s, cfg)?;
    Ok(forward.iter().zip(&reverse).map(|(f, r)| cfg.alpha * f + cfg.beta * r).collect())
}

/// One sample of a factorized (multi-dimensional) categorical policy.
#[derive(Debug, Clone, Copy)]
pub struct FactorizedSample<'a> {
    pub dists: &'a [ActionDistribution],
    pub actions: &'a [usize],
    pub advantage: f64,
    /// Per-dimension behaviour probabilities of `actions`.
    pub old_probs: &'a [f64],
}

/// Loss and per-dimension logit gradients for a factorized policy.
///
/// The forward term uses the joint probability (the product over
/// dimensions), so PPO clips the joint ratio. The reverse term is evaluated
/// per dimension, with that dimension's own `π_old`, and summed; it is gated
/// by the joint PPO clip. With a single dimension this is exactly
/// [`symmetric_loss`] / [`analytic_logit_gradient`].
pub fn factorized_loss_and_gradient(
    s: &FactorizedSample,
    cfg: &SymmetricLossConfig,
) -> Result<(LossValue, Vec<Vec<f64>>)> {
    if s.dists.is_empty() || s.dists.len() != s.actions.len() || s.dists.len() != s.old_probs.len() {
        return Err(contract("factorized sample needs matching, nonempty dimensions"));
    }
    if s.dists.len() == 1 {
        let single =
            LossSample { dist: &s.dists[0], action: s.actions[0], advantage: s.advantage, old_prob: s.old_probs[0] };
        let value = symmetric_loss(&single, cfg)?;
        let grad = analytic_logit_gradient(&single, cfg)?;
        return Ok((value, vec![grad]));
    }

    cfg.validate()?;
    let samples: Vec<LossSample> = s
        .dists
        .iter()
        .zip(s.actions)
        .zip(s.old_probs)
        .map(|((dist, &action), &old_prob)| LossSample { dist, action, advantage: s.advantage, old_prob })
        .collect();
    for sample in &samples {
        sample.check()?;
        if cfg.algorithm == Algorithm::Ppo {
            sample.check_old_prob()?;
        }
    }
    let a = s.advantage;

    let (forward_part, clipped, forward_scale) = match cfg.algorithm {
        Algorithm::A2c => {
            let mut total = 0.0;
            for sample in &samples {
                total += a2c_loss(sample)?;
            }
            (total, false, 1.0)
        }
        Algorithm::Ppo => {
            let log_ratio: f64 = samples.iter().map(|x| x.dist.log_prob(x.action) - x.old_prob.ln()).sum();
            let ratio = log_ratio.exp();
            let unclipped = ratio * a;
            let clipped_value = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
            if clipped_value < unclipped {
                (-clipped_value, true, 0.0)
            } else {
                (-unclipped, false, ratio)
            }
        }
    };

    let mut reverse_part = 0.0;
    let mut grads = Vec::with_capacity(samples.len());
    for sample in &samples {
        let p = sample.dist.probs();
        let i = sample.action;
        let k = p.len();
        let mut g = vec![0.0; k];
        if a != 0.0 && !clipped {
            let old = if cfg.algorithm == Algorithm::Ppo { sample.old_prob } else { 1.0 };
            reverse_part += directed_reverse(sample, cfg.z, 1.0 / old);
            for y in 0..k {
                // d(-A r log-term)/dz_y for the joint ratio, and the per-dimension reverse term.
                let forward = if y == i { a * forward_scale * (p[i] - 1.0) } else { a * forward_scale * p[y] };
                let reverse =
                    if y == i { -(a * cfg.z * p[y] * (p[y] - 1.0)) / old } else { -(a * cfg.z * p[y] * p[i]) / old };
                g[y] = cfg.alpha * forward + cfg.beta * reverse;
            }
        }
        grads.push(g);
    }
    Ok((
        LossValue { total: cfg.alpha * forward_part + cfg.beta * reverse_part, forward_part, reverse_part, clipped },
        grads,
    ))
}

#[cfg(test)]
mod reference {
    //! Supervised-learning reference losses for a one-hot label `q`.

    /// `-Σ q log p`.
    pub fn cross_entropy(q: &[f64], p: &[f64]) -> f64 {
        -q.iter().zip(p).filter(|(&qk, _)| qk > 0.0).map(|(qk, pk)| qk * pk.ln()).sum::<f64>()
    }

    /// `-Σ p log q` with `log 0 = z`.
    pub fn reverse_cross_entropy(q: &[f64], p: &[f64], z: f64) -> f64 {
        -q.iter().zip(p).map(|(&qk, pk)| pk * if qk > 0.0 { qk.ln() } else { z }).sum::<f64>()
    }

    pub fn symmetric_cross_entropy(q: &[f64], p: &[f64], alpha: f64, beta: f64, z: f64) -> f64 {
        alpha * cross_entropy(q, p) + beta * reverse_cross_entropy(q, p, z)
    }
}
