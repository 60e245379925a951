//! Experiment configs, seeded training sweeps and their on-disk artifacts.
//!
//! A run directory holds one `metrics_seed<seed>.jsonl` file per seed (one
//! [`UpdateMetrics`] object per line) and a `summary.json` with the final
//! evaluation of every seed and the aggregate across seeds.

mod compare;
pub mod verify;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvKind, NoiseKind};
use crate::error::{Error, Result};
use crate::losses::Algorithm;
use crate::trainer::{mean_and_standard_error, LossPath, Trainer, TrainerConfig, UpdateMetrics};

pub use compare::{compare, compare_files, Comparison, PairedDifference, Verdict};

/// Environment variable that replaces the default `runs` root.
pub const OUTPUT_DIR_ENV: &str = "SYMRL_OUTPUT_DIR";
pub const SUMMARY_FILE: &str = "summary.json";

/// Called with the seed and the metrics of every finished update.
pub type Progress<'a> = &'a (dyn Fn(u64, &UpdateMetrics) + Sync);

/// File name of the metrics stream of one seed.
pub fn metrics_file_name(seed: u64) -> String {
    format!("metrics_seed{seed}.jsonl")
}

/// Algorithm names accepted in config files. The `d`-prefixed names are the
/// discretized-action spellings and behave the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    A2c,
    Sa2c,
    #[serde(alias = "dppo")]
    Ppo,
    #[serde(alias = "dsppo")]
    Sppo,
}

/// The `[trainer]` table. Every field is optional and falls back to the
/// defaults of the chosen algorithm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub algorithm: Option<AlgorithmName>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub z: Option<f64>,
    pub clip_epsilon: Option<f64>,
    pub loss_path: Option<LossPath>,
    pub gamma: Option<f64>,
    pub lam: Option<f64>,
    pub normalize_advantages: Option<bool>,
    pub n_envs: Option<usize>,
    pub n_steps: Option<usize>,
    pub epochs: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub updates: Option<usize>,
    pub entropy_coef: Option<f64>,
    pub value_coef: Option<f64>,
    pub reward_scale: Option<f64>,
    /// `0` disables gradient clipping.
    pub max_grad_norm: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub bins: Option<usize>,
}

impl TrainerSection {
    /// Fills unset fields from the algorithm defaults. Without an explicit
    /// `beta`, SA2C uses 5.0 and SPPO uses 1.0, or 10.0 under BSC noise.
    pub fn resolve(&self, noise: &NoiseKind) -> TrainerConfig {
        let name = self.algorithm.unwrap_or(AlgorithmName::Ppo);
        let mut cfg = match name {
            AlgorithmName::A2c => TrainerConfig::a2c(),
            AlgorithmName::Sa2c => TrainerConfig::sa2c(5.0),
            AlgorithmName::Ppo => TrainerConfig::ppo(),
            AlgorithmName::Sppo => TrainerConfig::sppo(if matches!(noise, NoiseKind::Bsc { .. }) { 10.0 } else { 1.0 }),
        };
        let loss = &mut cfg.loss;
        set(&mut loss.alpha, self.alpha);
        set(&mut loss.beta, self.beta);
        set(&mut loss.z, self.z);
        set(&mut loss.clip_epsilon, self.clip_epsilon);
        set(&mut cfg.path, self.loss_path);
        set(&mut cfg.gae.gamma, self.gamma);
        set(&mut cfg.gae.lam, self.lam);
        set(&mut cfg.gae.normalize, self.normalize_advantages);
        set(&mut cfg.n_envs, self.n_envs);
        set(&mut cfg.n_steps, self.n_steps);
        set(&mut cfg.epochs_per_update, self.epochs);
        set(&mut cfg.minibatch_size, self.minibatch_size);
        set(&mut cfg.learning_rate, self.learning_rate);
        set(&mut cfg.total_updates, self.updates);
        set(&mut cfg.entropy_coef, self.entropy_coef);
        set(&mut cfg.value_coef, self.value_coef);
        set(&mut cfg.reward_scale, self.reward_scale);
        if let Some(m) = self.max_grad_norm {
            cfg.max_grad_norm = if m == 0.0 { None } else { Some(m) };
        }
        set(&mut cfg.hidden, self.hidden.clone());
        set(&mut cfg.bins, self.bins);
        if cfg.algorithm() == Algorithm::A2c && self.minibatch_size.is_none() {
            cfg.minibatch_size = cfg.batch_size();
        }
        cfg
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Evaluate after every `interval` updates and after the last one.
    pub interval: usize,
    pub episodes: usize,
    pub greedy: bool,
    /// Fill the `seconds` metrics field. Off by default so metrics files are reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { interval: 10, episodes: 10, greedy: false, record_timing: false }
    }
}

/// An experiment file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: String,
    #[serde(default)]
    pub noise: NoiseKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialize config: {e}")))
    }

    /// Checks the config and fills in every default.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let env: EnvKind = self.env.parse()?;
        self.noise.validate()?;
        if self.noise.requires_binary_rewards() && !env.binary_rewards() {
            return Err(Error::Validation(format!(
                "bsc noise needs {{0, 1}} rewards, which {} does not have",
                env.name()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Validation("seeds must be distinct".into()));
        }
        if self.evaluation.interval == 0 || self.evaluation.episodes == 0 {
            return Err(Error::Usage("evaluation interval and episodes must be positive".into()));
        }
        let trainer = self.trainer.resolve(&self.noise);
        trainer.validate().map_err(|e| Error::Usage(format!("invalid trainer settings: {e}")))?;
        if trainer.total_updates == 0 {
            return Err(Error::Usage("updates must be positive".into()));
        }
        Ok(ResolvedExperiment {
            name: self.name.clone(),
            env,
            noise: self.noise,
            trainer,
            seeds: self.seeds.clone(),
            evaluation: self.evaluation,
            output_dir: self.output_dir.clone(),
        })
    }
}

/// A validated experiment with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedExperiment {
    pub name: String,
    pub env: EnvKind,
    pub noise: NoiseKind,
    pub trainer: TrainerConfig,
    pub seeds: Vec<u64>,
    pub evaluation: EvaluationConfig,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    env: EnvKind,
    noise: NoiseKind,
    trainer: &'a TrainerConfig,
    seeds: &'a [u64],
    evaluation: EvaluationConfig,
}

impl ResolvedExperiment {
    /// SHA-256 over the semantic content: everything except the name, the
    /// output directory and the debug probe switch.
    pub fn config_hash(&self) -> String {
        let trainer = TrainerConfig { seed: 0, debug_gradient_probe: false, ..self.trainer.clone() };
        let fields = HashedFields {
            env: self.env,
            noise: self.noise,
            trainer: &trainer,
            seeds: &self.seeds,
            evaluation: self.evaluation,
        };
        let json = serde_json::to_vec(&fields).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Output directory: the explicit override, then the config's
    /// `output_dir`, then `<env_root>/<name>`, then `runs/<name>`.
    pub fn output_dir(&self, flag: Option<&Path>, env_root: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        env_root.unwrap_or(Path::new("runs")).join(&self.name)
    }
}

/// Command-line adjustments applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    /// Value of [`OUTPUT_DIR_ENV`], if set.
    pub output_root: Option<PathBuf>,
    /// Replaces the seed list with this single seed.
    pub seed_override: Option<u64>,
    pub debug_gradient_probe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Mean and standard error of the last evaluation's clean episode returns.
    pub mean: f64,
    pub standard_error: f64,
    pub returns: Vec<f64>,
}

/// Mean and standard error of the per-seed means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub standard_error: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(per_seed: &[SeedResult]) -> Self {
        let means: Vec<f64> = per_seed.iter().map(|s| s.mean).collect();
        let (mean, standard_error) = mean_and_standard_error(&means);
        Self { mean, standard_error, n: means.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub env: EnvKind,
    pub noise: NoiseKind,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub trainer: TrainerConfig,
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::Usage(format!("cannot open summary {}: {e}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub output_dir: PathBuf,
}

/// Loads, resolves and runs a config file.
pub fn run_file(path: &Path, opts: &RunOptions, progress: Option<Progress>) -> Result<RunOutcome> {
    run_experiment(&ExperimentConfig::load(path)?, opts, progress)
}

/// Trains one agent per seed and writes the metrics streams and the summary.
///
/// The config is validated before anything touches the file system. Seeds
/// run in parallel; each writes only its own metrics file.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions, progress: Option<Progress>) -> Result<RunOutcome> {
    let mut exp = config.resolve()?;
    if let Some(seed) = opts.seed_override {
        exp.seeds = vec![seed];
    }
    exp.trainer.debug_gradient_probe |= opts.debug_gradient_probe;
    let dir = exp.output_dir(opts.output_dir.as_deref(), opts.output_root.as_deref());
    fs::create_dir_all(&dir)?;

    let started = Instant::now();
    let per_seed = exp
        .seeds
        .par_iter()
        .map(|&seed| train_seed(&exp, seed, &dir.join(metrics_file_name(seed)), progress))
        .collect::<Result<Vec<_>>>()?;
    let summary = RunSummary {
        name: exp.name.clone(),
        env: exp.env,
        noise: exp.noise,
        seeds: exp.seeds.clone(),
        config_hash: exp.config_hash(),
        trainer: TrainerConfig { seed: 0, ..exp.trainer.clone() },
        aggregate: Aggregate::of(&per_seed),
        per_seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut out = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(RunOutcome { summary, output_dir: dir })
}

fn train_seed(
    exp: &ResolvedExperiment,
    seed: u64,
    metrics_path: &Path,
    progress: Option<Progress>,
) -> Result<SeedResult> {
    let cfg = TrainerConfig { seed, ..exp.trainer.clone() };
    let total = cfg.total_updates;
    let mut trainer = Trainer::new(cfg, exp.env, exp.noise)?;
    let mut out = BufWriter::new(File::create(metrics_path)?);
    let eval = exp.evaluation;
    let mut last = None;
    for u in 0..total {
        let started = Instant::now();
        let mut metrics = trainer.update()?;
        if (u + 1) % eval.interval == 0 || u + 1 == total {
            let result = trainer.evaluate(eval.episodes, u as u64, eval.greedy)?;
            metrics.eval_returns = Some(result.returns.clone());
            last = Some(result);
        }
        if eval.record_timing {
            metrics.seconds = Some(started.elapsed().as_secs_f64());
        }
        serde_json::to_writer(&mut out, &metrics)?;
        out.write_all(b"\n")?;
        if let Some(report) = progress {
            report(seed, &metrics);
        }
    }
    out.flush()?;
    let last = last.expect("the final update is always evaluated");
    Ok(SeedResult { seed, mean: last.mean, standard_error: last.standard_error, returns: last.returns })
}

/// Parses a metrics stream.
pub fn read_metrics(path: &Path) -> Result<Vec<UpdateMetrics>> {
    let file = File::open(path).map_err(|e| Error::Usage(format!("cannot open metrics {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| Error::Usage(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(records)
}

/// Rebuilds the per-seed results and the aggregate from the metrics files in `dir`.
pub fn reaggregate(dir: &Path, seeds: &[u64]) -> Result<(Vec<SeedResult>, Aggregate)> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let records = read_metrics(&dir.join(metrics_file_name(seed)))?;
        let returns = records
            .iter()
            .rev()
            .find_map(|m| m.eval_returns.clone())
            .ok_or_else(|| Error::Validation(format!("seed {seed} has no evaluation records")))?;
        let (mean, standard_error) = mean_and_standard_error(&returns);
        per_seed.push(SeedResult { seed, mean, standard_error, returns });
    }
    let aggregate = Aggregate::of(&per_seed);
    Ok((per_seed, aggregate))
}

#[derive(Serialize)]
struct CsvRow {
    update: usize,
    env_steps: u64,
    mean_return_clean: Option<f64>,
    loss_forward: f64,
    loss_reverse: f64,
    loss_value: f64,
    entropy: f64,
    adv_sign_flip_rate: Option<f64>,
    clipped_fraction: f64,
    grad_norm: f64,
    seconds: Option<f64>,
    clamped_actions: usize,
    eval_mean: Option<f64>,
}

/// Writes a metrics stream as CSV next to it (same stem, `.csv`). Missing
/// values become empty cells and evaluation returns are reduced to their mean.
pub fn export_csv(metrics_path: &Path) -> Result<PathBuf> {
    let records = read_metrics(metrics_path)?;
    let out_path = metrics_path.with_extension("csv");
    let mut writer = csv::Writer::from_path(&out_path)?;
    for m in records {
        writer.serialize(CsvRow {
            update: m.update,
            env_steps: m.env_steps,
            mean_return_clean: m.mean_return_clean,
            loss_forward: m.loss_forward,
            loss_reverse: m.loss_reverse,
            loss_value: m.loss_value,
            entropy: m.entropy,
            adv_sign_flip_rate: m.adv_sign_flip_rate,
            clipped_fraction: m.clipped_fraction,
            grad_norm: m.grad_norm,
            seconds: m.seconds,
            clamped_actions: m.clamped_actions,
            eval_mean: m.eval_returns.as_deref().map(|r| mean_and_standard_error(r).0),
        })?;
    }
    writer.flush()?;
    Ok(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        name = "small"
        env = "gridworld"
        seeds = [3, 4]

        [noise]
        kind = "bsc"
        p = 0.1

        [trainer]
        algorithm = "sppo"
        n_steps = 16
        minibatch_size = 32
        epochs = 2
        updates = 12

        [evaluation]
        interval = 5
        episodes = 3
    "#;

    #[test]
    fn defaults_follow_the_algorithm() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let exp = cfg.resolve().unwrap();
        assert_eq!((exp.trainer.loss.alpha, exp.trainer.loss.beta), (0.5, 10.0));
        assert_eq!(exp.trainer.learning_rate, 3e-4);
        assert!(exp.trainer.gae.normalize);

        let clean = ExperimentConfig { noise: NoiseKind::None, ..cfg.clone() };
        assert_eq!(clean.resolve().unwrap().trainer.loss.beta, 1.0);

        let mut a2c = cfg;
        a2c.trainer =
            TrainerSection { algorithm: Some(AlgorithmName::Sa2c), max_grad_norm: Some(0.0), ..Default::default() };
        let t = a2c.resolve().unwrap().trainer;
        assert_eq!((t.loss.beta, t.max_grad_norm, t.gae.normalize), (5.0, None, false));
        assert_eq!(t.minibatch_size, t.batch_size());
    }

    #[test]
    fn discretized_names_are_aliases() {
        let cfg = ExperimentConfig::from_toml(
            "name = \"d\"\nenv = \"pointmass\"\nseeds = [1]\n[trainer]\nalgorithm = \"dsppo\"\nbeta = 5.0\n",
        )
        .unwrap();
        assert_eq!(cfg.trainer.algorithm, Some(AlgorithmName::Sppo));
    }

    #[test]
    fn config_errors() {
        let usage = |text: &str| matches!(ExperimentConfig::from_toml(text), Err(Error::Usage(_)));
        assert!(usage("name = \"x\"\nenv = \"gridworld\"\nseeds = [1]\ncolour = 3\n"));
        assert!(usage("name = \"x\"\nseeds = [1]\n"));

        let resolve = |text: &str| ExperimentConfig::from_toml(text).unwrap().resolve();
        let validation = |r: Result<ResolvedExperiment>| matches!(r, Err(Error::Validation(_)));
        assert!(validation(resolve("name = \"x\"\nenv = \"atari\"\nseeds = [1]\n")));
        assert!(validation(resolve("name = \"x\"\nenv = \"gridworld\"\nseeds = []\n")));
        assert!(validation(resolve("name = \"x\"\nenv = \"gridworld\"\nseeds = [1, 1]\n")));
        assert!(validation(resolve(
            "name = \"x\"\nenv = \"pointmass\"\nseeds = [1]\n[noise]\nkind = \"bsc\"\np = 0.1\n"
        )));
        assert!(matches!(
            resolve("name = \"x\"\nenv = \"gridworld\"\nseeds = [1]\n[trainer]\nminibatch_size = 100\n"),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn hash_ignores_name_and_output_dir_only() {
        let base = ExperimentConfig::from_toml(SMALL).unwrap();
        let h = base.resolve().unwrap().config_hash();
        let renamed = ExperimentConfig { name: "other".into(), output_dir: Some("x".into()), ..base.clone() };
        assert_eq!(renamed.resolve().unwrap().config_hash(), h);

        // Spelling out a default is not a semantic change.
        let mut explicit = base.clone();
        explicit.trainer.learning_rate = Some(3e-4);
        assert_eq!(explicit.resolve().unwrap().config_hash(), h);

        let mut changed = base.clone();
        changed.trainer.learning_rate = Some(1e-3);
        assert_ne!(changed.resolve().unwrap().config_hash(), h);
        let mut changed = base.clone();
        changed.seeds = vec![3, 5];
        assert_ne!(changed.resolve().unwrap().config_hash(), h);
        let mut changed = base;
        changed.noise = NoiseKind::Bsc { p: 0.2 };
        assert_ne!(changed.resolve().unwrap().config_hash(), h);
    }

    #[test]
    fn output_dir_precedence() {
        let mut exp = ExperimentConfig::from_toml(SMALL).unwrap().resolve().unwrap();
        assert_eq!(exp.output_dir(None, None), PathBuf::from("runs/small"));
        assert_eq!(exp.output_dir(None, Some(Path::new("/tmp/r"))), PathBuf::from("/tmp/r/small"));
        exp.output_dir = Some("cfg".into());
        assert_eq!(exp.output_dir(None, Some(Path::new("/tmp/r"))), PathBuf::from("cfg"));
        assert_eq!(exp.output_dir(Some(Path::new("flag")), None), PathBuf::from("flag"));
    }

    #[test]
    fn run_writes_reproducible_artifacts() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let opts = |sub: &str| RunOptions { output_dir: Some(tmp.path().join(sub)), ..Default::default() };
        let a = run_experiment(&cfg, &opts("a"), None).unwrap();
        let b = run_experiment(&cfg, &opts("b"), None).unwrap();
        for seed in [3, 4] {
            let name = metrics_file_name(seed);
            let bytes = fs::read(a.output_dir.join(&name)).unwrap();
            assert_eq!(bytes, fs::read(b.output_dir.join(&name)).unwrap());
            let records = read_metrics(&a.output_dir.join(&name)).unwrap();
            assert_eq!(records.len(), 12);
            let evaluated: Vec<usize> = records.iter().filter(|m| m.eval_returns.is_some()).map(|m| m.update).collect();
            assert_eq!(evaluated, vec![4, 9, 11]);
            assert!(records.iter().all(|m| m.seconds.is_none()));
        }
        let loaded = RunSummary::load(&a.output_dir.join(SUMMARY_FILE)).unwrap();
        assert_eq!(loaded, a.summary);
        let (per_seed, aggregate) = reaggregate(&a.output_dir, &loaded.seeds).unwrap();
        assert_eq!(per_seed, loaded.per_seed);
        assert_eq!(aggregate, loaded.aggregate);
        assert_eq!(loaded.per_seed[0].returns.len(), 3);
    }

    #[test]
    fn seed_override_and_timing() {
        let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        cfg.evaluation.record_timing = true;
        let tmp = tempfile::tempdir().unwrap();
        let opts =
            RunOptions { output_dir: Some(tmp.path().to_path_buf()), seed_override: Some(9), ..Default::default() };
        let out = run_experiment(&cfg, &opts, None).unwrap();
        assert_eq!(out.summary.seeds, vec![9]);
        assert!(!tmp.path().join(metrics_file_name(3)).exists());
        let records = read_metrics(&tmp.path().join(metrics_file_name(9))).unwrap();
        assert!(records.iter().all(|m| m.seconds.is_some()));
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("out");
        let cfg = ExperimentConfig { env: "atari".into(), ..ExperimentConfig::from_toml(SMALL).unwrap() };
        let opts = RunOptions { output_dir: Some(target.clone()), ..Default::default() };
        assert!(matches!(run_experiment(&cfg, &opts, None), Err(Error::Validation(_))));
        assert!(!target.exists());
    }

    #[test]
    fn csv_export() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let opts =
            RunOptions { output_dir: Some(tmp.path().to_path_buf()), seed_override: Some(3), ..Default::default() };
        run_experiment(&cfg, &opts, None).unwrap();
        let path = export_csv(&tmp.path().join(metrics_file_name(3))).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let headers = reader.headers().unwrap().clone();
        assert_eq!(&headers[0], "update");
        assert_eq!(headers.len(), 13);
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(&rows[0][10], "");
        assert!(!rows[4][12].is_empty());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
