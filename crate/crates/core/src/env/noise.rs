use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::Stream;

/// Reward corruption model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseKind {
    #[default]
    None,
    /// Binary symmetric channel: flips a {0, 1} reward with probability `p`.
    Bsc { p: f64 },
    /// Additive zero-mean Gaussian noise.
    Gaussian { sigma: f64 },
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Bsc { p } if !(0.0..=1.0).contains(&p) => {
                Err(crate::Error::Validation(format!("bsc crossover must lie in [0, 1], got {p}")))
            }
            NoiseKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(crate::Error::Validation(format!("gaussian sigma must be finite and >= 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn requires_binary_rewards(&self) -> bool {
        matches!(self, NoiseKind::Bsc { .. })
    }
}

/// A noise model bound to its own random stream.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    kind: NoiseKind,
    rng: Stream,
}

impl NoiseChannel {
    pub fn new(kind: NoiseKind, rng: Stream) -> Self {
        Self { kind, rng }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn apply(&mut self, clean_reward: f64) -> Result<f64> {
        apply_noise(self, clean_reward)
    }
}

/// Corrupts one reward.
///
/// ```
/// use symrl::env::{apply_noise, NoiseChannel, NoiseKind};
/// let mut ch = NoiseChannel::new(NoiseKind::Bsc { p: 1.0 }, symrl::rng::seeded(0));
/// assert_eq!(apply_noise(&mut ch, 1.0).unwrap(), 0.0);
/// assert!(apply_noise(&mut ch, 0.5).is_err());
/// ```
pub fn apply_noise(channel: &mut NoiseChannel, clean_reward: f64) -> Result<f64> {
    match channel.kind {
        NoiseKind::None => Ok(clean_reward),
        NoiseKind::Bsc { p } => {
            if clean_reward != 0.0 && clean_reward != 1.0 {
                return Err(contract(format!("bsc noise needs a reward in {{0, 1}}, got {clean_reward}")));
            }
            // Always draw so the stream position does not depend on p.
            let u: f64 = channel.rng.random();
            Ok(if u < p { 1.0 - clean_reward } else { clean_reward })
        }
        NoiseKind::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).map_err(|e| contract(format!("gaussian noise: {e}")))?;
            let eps = normal.sample(&mut channel.rng);
            Ok(if sigma == 0.0 { clean_reward } else { clean_reward + eps })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn none_is_identity() {
        let mut ch = NoiseChannel::new(NoiseKind::None, seeded(1));
        for r in [0.0, 1.0, -3.5, 1e9] {
            assert_eq!(ch.apply(r).unwrap(), r);
        }
    }

    #[test]
    fn zero_strength_is_identity() {
        let mut bsc = NoiseChannel::new(NoiseKind::Bsc { p: 0.0 }, seeded(1));
        let mut gauss = NoiseChannel::new(NoiseKind::Gaussian { sigma: 0.0 }, seeded(1));
        for i in 0..1000 {
            let r = (i % 2) as f64;
            assert_eq!(bsc.apply(r).unwrap(), r);
            assert_eq!(gauss.apply(r * 0.37).unwrap(), r * 0.37);
        }
    }

    #[test]
    fn bsc_rate() {
        let mut ch = NoiseChannel::new(NoiseKind::Bsc { p: 0.1 }, seeded(2));
        let n = 100_000;
        let flipped = (0..n).filter(|_| ch.apply(1.0).unwrap() == 0.0).count();
        let rate = flipped as f64 / n as f64;
        assert!((rate - 0.1).abs() <= 0.003, "rate {rate}");
    }

    #[test]
    fn gaussian_moments() {
        let mut ch = NoiseChannel::new(NoiseKind::Gaussian { sigma: 0.05 }, seeded(3));
        let xs: Vec<f64> = (0..100_000).map(|_| ch.apply(0.0).unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 5e-4, "mean {mean}");
        assert!((std - 0.05).abs() <= 0.001, "std {std}");
    }

    #[test]
    fn bsc_rejects_non_binary() {
        let mut ch = NoiseChannel::new(NoiseKind::Bsc { p: 0.1 }, seeded(0));
        assert!(matches!(ch.apply(0.5), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn validation_and_serde() {
        assert!(NoiseKind::Bsc { p: 1.5 }.validate().is_err());
        assert!(NoiseKind::Gaussian { sigma: -1.0 }.validate().is_err());
        let k: NoiseKind = toml::from_str("kind = \"bsc\"\np = 0.1").unwrap();
        assert_eq!(k, NoiseKind::Bsc { p: 0.1 });
        let k: NoiseKind = toml::from_str("kind = \"none\"").unwrap();
        assert_eq!(k, NoiseKind::None);
    }
}
