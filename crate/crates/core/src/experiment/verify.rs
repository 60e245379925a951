//! Built-in property suites: finite-difference and closed-form checks of the
//! loss gradients, the GAE and sign-flip oracles, and noise-channel rates.
//!
//! Every check draws from a fixed seed, so a report is the same on every
//! machine.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::advantage::{compute_gae, normalize_advantages, GaeConfig};
use crate::env::{apply_noise, NoiseChannel, NoiseKind};
use crate::error::{Error, Result};
use crate::kernel::{central_difference, compare_gradients};
use crate::losses::{
    a2c_loss, analytic_logit_gradient, logit_gradients, ppo_loss, ra2c_loss, symmetric_loss, Algorithm, LossSample,
    SymmetricLossConfig,
};
use crate::policy::ActionDistribution;
use crate::rng::{seeded, stream, Purpose, Stream};

const SEED: u64 = 0x5eed;
const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gradients,
    Losses,
    Advantage,
    Noise,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gradients, Suite::Losses, Suite::Advantage, Suite::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Losses => "losses",
            Suite::Advantage => "advantage",
            Suite::Noise => "noise",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            Error::Usage(format!("unknown suite `{s}` (expected gradients, losses, advantage or noise)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn verify(suite: Suite) -> Result<VerifyReport> {
    let checks = match suite {
        Suite::Gradients => vec![gradient_sweep(1000)?, alignment(10_000)?, accelerator_peak()?],
        Suite::Losses => vec![ra2c_summation(10_000)?, closed_forms(1000)?],
        Suite::Advantage => vec![gae_oracle(100)?, flip_prediction(10_000)?],
        Suite::Noise => vec![bsc_rate(0.1, 100_000)?, gaussian_spread(0.05, 100_000)?, bsc_rejects_non_binary()],
    };
    Ok(VerifyReport { suite, checks })
}

/// A random loss sample in the sweep's ranges: `k ∈ [2, 8]`,
/// `A ∈ [-3, 3] \ {0}`, `π_old ∈ [0.05, 1]`. The sampled action's logit is
/// set so that `π_i / π_old ∈ [0.85, 1.15]`, which keeps the PPO terms on
/// their unclipped branch; the other logits are uniform in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct SweepCase {
    pub dist: ActionDistribution,
    pub action: usize,
    pub advantage: f64,
    pub old_prob: f64,
}

impl SweepCase {
    pub fn draw(rng: &mut Stream) -> Self {
        let k = rng.random_range(2..=8);
        let action = rng.random_range(0..k);
        let mut advantage = 0.0;
        while advantage == 0.0 {
            advantage = rng.random_range(-3.0..=3.0);
        }
        let old_prob: f64 = rng.random_range(0.05..=1.0);
        let target = (old_prob * rng.random_range(0.85..1.15)).min(0.99);
        let mut logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rest: f64 = logits.iter().enumerate().filter(|&(j, _)| j != action).map(|(_, z)| z.exp()).sum();
        logits[action] = (target / (1.0 - target) * rest).ln();
        let dist = ActionDistribution::from_logits(logits).expect("finite logits");
        Self { dist, action, advantage, old_prob }
    }

    pub fn sample(&self) -> LossSample<'_> {
        LossSample::new(&self.dist, self.action, self.advantage).with_old_prob(self.old_prob)
    }
}

fn with_logits<T>(case: &SweepCase, logits: &[f64], f: impl FnOnce(&LossSample) -> T) -> T {
    let dist = ActionDistribution::from_logits(logits.to_vec()).expect("finite logits");
    f(&LossSample::new(&dist, case.action, case.advantage).with_old_prob(case.old_prob))
}

/// Analytic logit gradients of A2C, RA2C, PPO, RPPO and two weighted
/// combinations against central differences through the softmax.
pub fn gradient_sweep(cases: usize) -> Result<Check> {
    let mut rng = seeded(SEED);
    let mut worst = 0.0f64;
    let mut worst_label = "";
    for _ in 0..cases {
        let case = SweepCase::draw(&mut rng);
        let beta = rng.random_range(0.0..10.0);
        let a2c = SymmetricLossConfig::plain(Algorithm::A2c);
        let ppo = SymmetricLossConfig::plain(Algorithm::Ppo);
        let sa2c = SymmetricLossConfig::sa2c(beta);
        let sppo = SymmetricLossConfig::sppo(beta);
        let s = case.sample();
        let checks: [(&str, Vec<f64>, Box<dyn Fn(&LossSample) -> f64>); 6] = [
            ("a2c", logit_gradients(&s, &a2c)?.forward, Box::new(|x| a2c_loss(x).unwrap())),
            (
                "ra2c",
                logit_gradients(&s, &a2c)?.reverse,
                Box::new(move |x| symmetric_loss(x, &a2c).unwrap().reverse_part),
            ),
            ("ppo", logit_gradients(&s, &ppo)?.forward, Box::new(|x| ppo_loss(x, 0.2).unwrap().0)),
            (
                "rppo",
                logit_gradients(&s, &ppo)?.reverse,
                Box::new(move |x| symmetric_loss(x, &ppo).unwrap().reverse_part),
            ),
            ("sa2c", analytic_logit_gradient(&s, &sa2c)?, Box::new(move |x| symmetric_loss(x, &sa2c).unwrap().total)),
            ("sppo", analytic_logit_gradient(&s, &sppo)?, Box::new(move |x| symmetric_loss(x, &sppo).unwrap().total)),
        ];
        for (label, analytic, loss) in checks {
            let numeric = central_difference(|z| with_logits(&case, z, |x| loss(x)), case.dist.logits(), FD_STEP)?;
            let rel = compare_gradients(&analytic, &numeric, REL_FLOOR).max_rel_diff;
            if rel > worst {
                worst = rel;
                worst_label = label;
            }
        }
    }
    Ok(Check::new(
        "finite-difference gradients",
        worst <= 1e-4,
        format!("{cases} cases x 6 losses, max relative error {worst:.2e} ({worst_label}), tolerance 1e-4"),
    ))
}

/// Forward and reverse gradient components never point in opposite directions.
pub fn alignment(cases: usize) -> Result<Check> {
    let mut rng = seeded(SEED ^ 1);
    let (mut compared, mut violations) = (0usize, 0usize);
    for _ in 0..cases {
        let case = SweepCase::draw(&mut rng);
        for algorithm in [Algorithm::A2c, Algorithm::Ppo] {
            let g = logit_gradients(&case.sample(), &SymmetricLossConfig::plain(algorithm))?;
            for (f, r) in g.forward.iter().zip(&g.reverse) {
                if *f != 0.0 && *r != 0.0 {
                    compared += 1;
                    if f.signum() != r.signum() {
                        violations += 1;
                    }
                }
            }
        }
    }
    Ok(Check::new(
        "forward/reverse sign alignment",
        violations == 0,
        format!("{violations} violations among {compared} nonzero component pairs"),
    ))
}

/// `|∂L_ra2c/∂z_i|` over `π_i ∈ {0.01, ..., 0.99}` peaks at 0.5.
pub fn accelerator_peak() -> Result<Check> {
    let cfg = SymmetricLossConfig::plain(Algorithm::A2c);
    let mut best = (0.0, f64::NEG_INFINITY);
    for step in 1..=99 {
        let p = step as f64 / 100.0;
        let dist = ActionDistribution::from_logits(vec![p.ln(), (1.0 - p).ln()])?;
        let g = logit_gradients(&LossSample::new(&dist, 0, 1.0), &cfg)?.reverse[0].abs();
        if g > best.1 {
            best = (p, g);
        }
    }
    Ok(Check::new(
        "reverse-gradient peak",
        (best.0 - 0.5).abs() <= 0.01 + 1e-12,
        format!("maximum {:.6} at pi = {:.2}, expected 0.50 +/- 0.01", best.1, best.0),
    ))
}

/// The RA2C sum over non-sampled actions equals `|A| |Z| (1 - π_i)`.
pub fn ra2c_summation(cases: usize) -> Result<Check> {
    let mut rng = seeded(SEED ^ 2);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(2..=8);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dist = ActionDistribution::from_logits(logits)?;
        let i = rng.random_range(0..k);
        let a = rng.random_range(-3.0..3.0);
        let z = -rng.random_range(0.1..5.0);
        let value = ra2c_loss(&LossSample::new(&dist, i, a), z)?;
        worst = worst.max((value - a.abs() * z.abs() * (1.0 - dist.prob(i))).abs());
    }
    Ok(Check::new(
        "RA2C closed form",
        worst <= 1e-12,
        format!("{cases} cases, max abs difference {worst:.2e}, tolerance 1e-12"),
    ))
}

/// Componentwise closed forms of the four logit gradients, for both signs of `A`.
pub fn closed_forms(cases: usize) -> Result<Check> {
    let mut rng = seeded(SEED);
    let mut worst = 0.0f64;
    let z = -1.0;
    for _ in 0..cases {
        let case = SweepCase::draw(&mut rng);
        let (a, i, old) = (case.advantage, case.action, case.old_prob);
        let p = case.dist.probs();
        let s = case.sample();
        let a2c = logit_gradients(&s, &SymmetricLossConfig::plain(Algorithm::A2c))?;
        let ppo = logit_gradients(&s, &SymmetricLossConfig::plain(Algorithm::Ppo))?;
        for y in 0..p.len() {
            let expected_a2c = if y == i { -a * (1.0 - p[i]) } else { a * p[y] };
            let expected_ra2c = if y == i { -a * z * p[y] * (p[y] - 1.0) } else { -a * z * p[y] * p[i] };
            let expected_ppo = if y == i { -(a / old) * p[i] * (1.0 - p[i]) } else { (a / old) * p[i] * p[y] };
            let expected_rppo = expected_ra2c / old;
            for (got, want) in [
                (a2c.forward[y], expected_a2c),
                (a2c.reverse[y], expected_ra2c),
                (ppo.forward[y], expected_ppo),
                (ppo.reverse[y], expected_rppo),
            ] {
                worst = worst.max((got - want).abs());
            }
        }
    }
    Ok(Check::new(
        "closed-form gradients",
        worst <= 1e-12,
        format!("{cases} cases x 4 gradients, max abs difference {worst:.2e}, tolerance 1e-12"),
    ))
}

/// With `γ = λ = 1` on terminal episodes, GAE equals the Monte-Carlo return minus the value.
pub fn gae_oracle(episodes: usize) -> Result<Check> {
    let mut rng = seeded(SEED ^ 3);
    let cfg = GaeConfig { gamma: 1.0, lam: 1.0, ..GaeConfig::default() };
    let mut worst = 0.0f64;
    for _ in 0..episodes {
        let rewards: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut dones = [false; 6];
        dones[5] = true;
        let est = compute_gae(&rewards, &values, rng.random_range(-5.0..5.0), &dones, &cfg)?;
        for t in 0..6 {
            let g: f64 = rewards[t..].iter().sum();
            worst = worst.max((est.raw[t] - (g - values[t])).abs());
            worst = worst.max((est.returns[t] - g).abs());
        }
    }
    Ok(Check::new(
        "GAE Monte-Carlo oracle",
        worst <= 1e-10,
        format!("{episodes} six-step episodes, max abs difference {worst:.2e}, tolerance 1e-10"),
    ))
}

/// An advantage changes sign under normalization exactly when it lies strictly between zero and the batch mean.
pub fn flip_prediction(batches: usize) -> Result<Check> {
    let mut rng = seeded(SEED ^ 4);
    let mut mismatches = 0usize;
    let mut rate_mismatches = 0usize;
    for _ in 0..batches {
        let n = rng.random_range(2..=64);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let (normalized, rate) = normalize_advantages(&raw, 1e-8)?;
        let mut predicted_flips = 0usize;
        for (&r, &z) in raw.iter().zip(&normalized) {
            let predicted = (0.0 < r && r < mean) || (mean < r && r < 0.0);
            let direct = r != 0.0 && (r > 0.0) != (z > 0.0);
            predicted_flips += predicted as usize;
            mismatches += (predicted != direct) as usize;
        }
        let nonzero = raw.iter().filter(|&&r| r != 0.0).count();
        if rate != predicted_flips as f64 / nonzero as f64 {
            rate_mismatches += 1;
        }
    }
    Ok(Check::new(
        "sign-flip predictor",
        mismatches == 0 && rate_mismatches == 0,
        format!("{batches} batches, {mismatches} sample mismatches, {rate_mismatches} rate mismatches"),
    ))
}

fn channel(kind: NoiseKind, index: u64) -> NoiseChannel {
    NoiseChannel::new(kind, stream(SEED, Purpose::Noise, index))
}

/// Empirical BSC crossover rate within three binomial standard deviations.
pub fn bsc_rate(p: f64, trials: usize) -> Result<Check> {
    let mut ch = channel(NoiseKind::Bsc { p }, 0);
    let mut flips = 0usize;
    for t in 0..trials {
        let clean = (t % 2) as f64;
        flips += (apply_noise(&mut ch, clean)? != clean) as usize;
    }
    let rate = flips as f64 / trials as f64;
    let bound = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(Check::new(
        "bsc crossover rate",
        (rate - p).abs() <= bound,
        format!("{trials} trials, rate {rate:.5}, expected {p} +/- {bound:.5} (3 sigma)"),
    ))
}

/// Sample standard deviation of Gaussian reward noise within 0.001 of sigma.
pub fn gaussian_spread(sigma: f64, trials: usize) -> Result<Check> {
    let mut ch = channel(NoiseKind::Gaussian { sigma }, 1);
    let mut noise = Vec::with_capacity(trials);
    for _ in 0..trials {
        noise.push(apply_noise(&mut ch, 0.5)? - 0.5);
    }
    let n = trials as f64;
    let mean = noise.iter().sum::<f64>() / n;
    let std = (noise.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(Check::new(
        "gaussian noise spread",
        (std - sigma).abs() <= 0.001 && mean.abs() <= 4.0 * sigma / n.sqrt(),
        format!("{trials} trials, std {std:.5}, mean {mean:.2e}, expected std {sigma} +/- 0.001"),
    ))
}

fn bsc_rejects_non_binary() -> Check {
    let mut ch = channel(NoiseKind::Bsc { p: 0.1 }, 2);
    let rejected = matches!(apply_noise(&mut ch, 0.5), Err(Error::Contract(_)));
    Check::new("bsc rejects non-binary rewards", rejected, "reward 0.5".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for suite in Suite::ALL {
            let report = verify(suite).unwrap();
            for check in &report.checks {
                assert!(check.passed, "{check}");
            }
        }
    }

    #[test]
    fn sweep_cases_stay_unclipped() {
        let mut rng = seeded(1);
        for _ in 0..1000 {
            let case = SweepCase::draw(&mut rng);
            assert!(case.advantage != 0.0 && (0.05..=1.0).contains(&case.old_prob));
            assert!((2..=8).contains(&case.dist.k()));
            assert!(!ppo_loss(&case.sample(), 0.2).unwrap().1);
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!("noise".parse::<Suite>().unwrap(), Suite::Noise);
        assert!(matches!("everything".parse::<Suite>(), Err(Error::Usage(_))));
    }
}
