use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aggregate, RunSummary};
use crate::env::{EnvKind, NoiseKind};
use crate::error::{Error, Result};
use crate::trainer::mean_and_standard_error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    /// `a - b`.
    pub difference: f64,
}

/// Seed-paired comparison of two runs. Positive differences favour `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a_name: String,
    pub b_name: String,
    pub env: EnvKind,
    pub noise: NoiseKind,
    pub paired: Vec<PairedDifference>,
    pub a: Aggregate,
    pub b: Aggregate,
    pub mean_difference: f64,
    /// Standard error of the paired differences.
    pub difference_standard_error: f64,
    /// The run with the higher aggregate mean.
    pub verdict: Verdict,
}

/// Compares two summaries over the same environment, noise and seed set.
pub fn compare(a: &RunSummary, b: &RunSummary) -> Result<Comparison> {
    if a.env != b.env {
        return Err(Error::Validation(format!("environments differ: {:?} vs {:?}", a.env, b.env)));
    }
    if a.noise != b.noise {
        return Err(Error::Validation(format!("noise channels differ: {:?} vs {:?}", a.noise, b.noise)));
    }
    let mut seeds_a = a.seeds.clone();
    let mut seeds_b = b.seeds.clone();
    seeds_a.sort_unstable();
    seeds_b.sort_unstable();
    if seeds_a != seeds_b {
        return Err(Error::Validation(format!("seed sets differ: {seeds_a:?} vs {seeds_b:?}")));
    }
    let mut paired = Vec::with_capacity(seeds_a.len());
    for seed in seeds_a {
        let find = |s: &RunSummary| {
            s.per_seed
                .iter()
                .find(|r| r.seed == seed)
                .map(|r| r.mean)
                .ok_or_else(|| Error::Validation(format!("{} has no result for seed {seed}", s.name)))
        };
        let (va, vb) = (find(a)?, find(b)?);
        paired.push(PairedDifference { seed, a: va, b: vb, difference: va - vb });
    }
    let diffs: Vec<f64> = paired.iter().map(|p| p.difference).collect();
    let (mean_difference, difference_standard_error) = mean_and_standard_error(&diffs);
    let verdict = if a.aggregate.mean > b.aggregate.mean {
        Verdict::A
    } else if b.aggregate.mean > a.aggregate.mean {
        Verdict::B
    } else {
        Verdict::Tie
    };
    Ok(Comparison {
        a_name: a.name.clone(),
        b_name: b.name.clone(),
        env: a.env,
        noise: a.noise,
        paired,
        a: a.aggregate,
        b: b.aggregate,
        mean_difference,
        difference_standard_error,
        verdict,
    })
}

pub fn compare_files(a: &Path, b: &Path) -> Result<Comparison> {
    compare(&RunSummary::load(a)?, &RunSummary::load(b)?)
}
