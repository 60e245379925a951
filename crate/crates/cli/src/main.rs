use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use symrl::experiment::verify::{verify, Suite};
use symrl::experiment::{
    compare_files, export_csv, run_file, Comparison, Progress, RunOptions, Verdict, OUTPUT_DIR_ENV,
};
use symrl::trainer::UpdateMetrics;
use symrl::Error;

#[derive(Parser, Debug)]
#[command(name = "symrl", version, about = "Train and compare A2C/PPO agents with symmetric losses")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment config: one training run per seed.
    Run {
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Write results here instead of the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Check every optimizer step against finite differences.
        #[arg(long)]
        debug_gradient_probe: bool,
    },
    /// Seed-paired comparison of two summary.json files.
    Compare {
        summary_a: PathBuf,
        summary_b: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a built-in property suite: gradients, losses, advantage, noise or all.
    Verify { suite: String },
    /// Convert a metrics JSONL file to CSV next to it.
    ExportCsv { metrics: PathBuf },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Usage(_) => ExitCode::from(2),
        Error::Validation(_) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn progress_line(seed: u64, m: &UpdateMetrics) {
    let Some(returns) = &m.eval_returns else { return };
    let eval = returns.iter().sum::<f64>() / returns.len() as f64;
    let train = m.mean_return_clean.map_or("-".to_string(), |r| format!("{r:.3}"));
    eprintln!("seed {seed} update {:>5} steps {:>8} train {train} eval {eval:.3}", m.update + 1, m.env_steps);
}

fn print_comparison(c: &Comparison) {
    println!("{} vs {} on {:?}", c.a_name, c.b_name, c.env);
    println!("{:>8} {:>12} {:>12} {:>12}", "seed", "a", "b", "a - b");
    for p in &c.paired {
        println!("{:>8} {:>12.4} {:>12.4} {:>12.4}", p.seed, p.a, p.b, p.difference);
    }
    println!("a: {:.4} +/- {:.4}", c.a.mean, c.a.standard_error);
    println!("b: {:.4} +/- {:.4}", c.b.mean, c.b.standard_error);
    println!("mean difference: {:+.4} +/- {:.4}", c.mean_difference, c.difference_standard_error);
    let verdict = match c.verdict {
        Verdict::A => c.a_name.as_str(),
        Verdict::B => c.b_name.as_str(),
        Verdict::Tie => "tie",
    };
    println!("verdict: {verdict}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed_override, output_dir, debug_gradient_probe } => {
            let opts = RunOptions {
                output_dir,
                output_root: std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from),
                seed_override,
                debug_gradient_probe,
            };
            let progress: Option<Progress> = if cli.quiet { None } else { Some(&progress_line) };
            run_file(&config, &opts, progress).map(|out| {
                if !cli.quiet {
                    for s in &out.summary.per_seed {
                        println!("seed {}: {:.4} +/- {:.4}", s.seed, s.mean, s.standard_error);
                    }
                    let agg = out.summary.aggregate;
                    println!("aggregate over {} seeds: {:.4} +/- {:.4}", agg.n, agg.mean, agg.standard_error);
                    println!("results in {}", out.output_dir.display());
                }
                true
            })
        }
        Command::Compare { summary_a, summary_b, json } => compare_files(&summary_a, &summary_b).map(|c| {
            if json {
                println!("{}", serde_json::to_string_pretty(&c).expect("comparison serializes"));
            } else {
                print_comparison(&c);
            }
            true
        }),
        Command::Verify { suite } => {
            let suites = if suite == "all" { Ok(Suite::ALL.to_vec()) } else { suite.parse().map(|s| vec![s]) };
            suites.and_then(|suites| {
                let mut passed = true;
                for suite in suites {
                    let report = verify(suite)?;
                    for check in &report.checks {
                        println!("[{}] {check}", suite.name());
                    }
                    passed &= report.passed();
                }
                Ok(passed)
            })
        }
        Command::ExportCsv { metrics } => export_csv(&metrics).map(|path| {
            if !cli.quiet {
                println!("{}", path.display());
            }
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
