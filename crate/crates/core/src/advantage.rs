//! Generalized advantage estimation, advantage normalization and the
//! sign-flip measurement.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lam: f64,
    pub normalize: bool,
    pub norm_epsilon: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self { gamma: 0.99, lam: 0.95, normalize: false, norm_epsilon: 1e-8 }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(contract("gamma and lambda must lie in [0, 1]"));
        }
        if !(self.norm_epsilon > 0.0) {
            return Err(contract("norm_epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
    /// Value targets, `A_t + V_t`.
    pub returns: Vec<f64>,
    pub sign_flip_rate: Option<f64>,
}

/// GAE over one trajectory segment.
///
/// `dones[t]` marks that the episode ended after step `t`, which cuts both the
/// bootstrap and the λ-trace. `bootstrap_value` is `V` of the state following
/// the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    dones: &[bool],
    cfg: &GaeConfig,
) -> Result<AdvantageEstimate> {
    let n = rewards.len();
    if n == 0 || values.len() != n || dones.len() != n {
        return Err(contract(format!(
            "rewards, values and dones must share a nonzero length (got {}, {}, {})",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut raw = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + cfg.gamma * next_value * live - values[t];
        raw[t] = delta + cfg.gamma * cfg.lam * live * next_advantage;
        next_value = values[t];
        next_advantage = raw[t];
    }
    let returns = raw.iter().zip(values).map(|(a, v)| a + v).collect();
    let (normalized, sign_flip_rate) = if cfg.normalize && n >= 2 {
        let (norm, rate) = normalize_advantages(&raw, cfg.norm_epsilon)?;
        (Some(norm), Some(rate))
    } else {
        (None, None)
    };
    Ok(AdvantageEstimate { raw, normalized, returns, sign_flip_rate })
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Standardizes advantages with the population standard deviation and
/// reports the fraction of nonzero advantages whose sign changed.
///
/// If every entry is equal the output is all zeros, and each nonzero input
/// counts as flipped.
pub fn normalize_advantages(raw: &[f64], norm_epsilon: f64) -> Result<(Vec<f64>, f64)> {
    if raw.len() < 2 {
        return Err(contract("advantage normalization needs at least two samples"));
    }
    let n = raw.len() as f64;
    let normalized: Vec<f64> = if raw.iter().all(|&x| x == raw[0]) {
        vec![0.0; raw.len()]
    } else {
        let mean = raw.iter().sum::<f64>() / n;
        let std = (raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        raw.iter().map(|x| (x - mean) / (std + norm_epsilon)).collect()
    };
    let (mut counted, mut flipped) = (0usize, 0usize);
    for (&r, &z) in raw.iter().zip(&normalized) {
        if r != 0.0 {
            counted += 1;
            if sign(r) != sign(z) {
                flipped += 1;
            }
        }
    }
    let rate = if counted == 0 { 0.0 } else { flipped as f64 / counted as f64 };
    Ok((normalized, rate))
}
