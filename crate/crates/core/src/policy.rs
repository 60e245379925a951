//! Categorical action distributions and action-space discretization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, numeric, Result};

/// Numerically stable softmax (the maximum logit is subtracted first).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(numeric("softmax of non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// A categorical distribution over `k >= 2` actions for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    logits: Vec<f64>,
    probs: Vec<f64>,
    log_normalizer: f64,
}

impl ActionDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(contract(format!("a distribution needs at least 2 actions, got {}", logits.len())));
        }
        let probs = softmax(&logits)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_normalizer = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        Ok(Self { logits, probs, log_normalizer })
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    /// `log π(action)`, computed from the logits rather than the rounded probability.
    pub fn log_prob(&self, action: usize) -> f64 {
        self.logits[action] - self.log_normalizer
    }

    /// Inverse-CDF sampling from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
        // u landed in the rounding gap above the last cumulative sum.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(self.k() - 1)
    }

    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// `-Σ π log π`, in `[0, log k]`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| p * self.log_prob(i)).sum::<f64>()
    }
}

/// Independent categorical distributions, one per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedDistribution {
    dims: Vec<ActionDistribution>,
}

impl FactorizedDistribution {
    pub fn new(dims: Vec<ActionDistribution>) -> Result<Self> {
        if dims.is_empty() {
            return Err(contract("factorized distribution needs at least one dimension"));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[ActionDistribution] {
        &self.dims
    }

    fn check(&self, indices: &[usize]) -> Result<()> {
        if indices.len() != self.dims.len() {
            return Err(contract(format!("expected {} action indices, got {}", self.dims.len(), indices.len())));
        }
        for (d, (&i, dist)) in indices.iter().zip(&self.dims).enumerate() {
            if i >= dist.k() {
                return Err(contract(format!("action index {i} out of range for dimension {d}")));
            }
        }
        Ok(())
    }

    /// Joint log-probability: the sum of per-dimension log-probabilities.
    pub fn log_prob(&self, indices: &[usize]) -> Result<f64> {
        self.check(indices)?;
        Ok(indices.iter().zip(&self.dims).map(|(&i, d)| d.log_prob(i)).sum())
    }

    /// Per-dimension probabilities of a multi-index.
    pub fn probs_of(&self, indices: &[usize]) -> Result<Vec<f64>> {
        self.check(indices)?;
        Ok(indices.iter().zip(&self.dims).map(|(&i, d)| d.prob(i)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.dims.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn mode(&self) -> Vec<usize> {
        self.dims.iter().map(ActionDistribution::mode).collect()
    }

    pub fn entropy(&self) -> f64 {
        self.dims.iter().map(ActionDistribution::entropy).sum()
    }
}

/// Uniform grid over a box `[low, high]`, `bins` points per dimension
/// including both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    low: Vec<f64>,
    high: Vec<f64>,
    bins: Vec<usize>,
}

impl Discretizer {
    pub fn new(low: Vec<f64>, high: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() || low.len() != bins.len() {
            return Err(contract("discretizer bounds and bin counts must have equal, nonzero length"));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(contract("discretizer requires low < high in every dimension"));
        }
        if bins.iter().any(|&b| b < 2) {
            return Err(contract("discretizer needs at least 2 bins per dimension"));
        }
        Ok(Self { low, high, bins })
    }

    /// Same bin count for every dimension.
    pub fn uniform(low: Vec<f64>, high: Vec<f64>, bins: usize) -> Result<Self> {
        let n = low.len();
        Self::new(low, high, vec![bins; n])
    }

    pub fn dims(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Maps one bin index per dimension to `low + index * (high - low) / (bins - 1)`.
    pub fn decode(&self, indices: &[usize]) -> Result<Vec<f64>> {
        if indices.len() != self.bins.len() {
            return Err(contract(format!("expected {} indices, got {}", self.bins.len(), indices.len())));
        }
        indices
            .iter()
            .enumerate()
            .map(|(d, &i)| {
                let bins = self.bins[d];
                if i >= bins {
                    return Err(contract(format!("bin index {i} out of range [0, {bins})")));
                }
                if i == bins - 1 {
                    return Ok(self.high[d]);
                }
                Ok(self.low[d] + i as f64 * (self.high[d] - self.low[d]) / (bins - 1) as f64)
            })
            .collect()
    }
}
