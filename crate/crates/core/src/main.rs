use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use daps::harness::{self, presets, ExperimentConfig, RunOptions, RunResult};
use daps::metrics::{wasserstein2_exact, wasserstein2_sliced, PointCloud, EXACT_W2_CAP};
use daps::rng::aux_rng;
use daps::{DapsError, Result};

#[derive(Parser)]
#[command(name = "daps", version, about = "Decoupled annealing posterior sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `daps presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Number of chains; overrides `run.chains`.
    #[arg(long, value_name = "N")]
    chains: Option<usize>,
    /// Output directory; overrides `run.out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write full state vectors into trajectory.csv.
    #[arg(long)]
    dump_states: bool,
    /// Worker threads (falls back to DAPS_THREADS).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run(Common),
    /// One run per value of a numeric config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `section.key` or a bare key unique across sections.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Run k chains and keep the best one.
    BestOf {
        #[command(flatten)]
        common: Common,
        #[arg(short, long, default_value_t = harness::DEFAULT_BEST_OF)]
        k: usize,
    },
    /// 2-Wasserstein distance between two point-cloud files.
    Metrics {
        /// samples.csv or a plain-text matrix.
        a: PathBuf,
        b: PathBuf,
        /// Use the sliced estimator with this many projections.
        #[arg(long)]
        sliced: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => {
            return Err(DapsError::Config {
                key: "--config".into(),
                reason: "give --config PATH or --preset NAME".into(),
            })
        }
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = common.chains {
        cfg.run.chains = n;
    }
    if let Some(out) = &common.out {
        cfg.run.out = Some(out.display().to_string());
    }
    if common.dump_states {
        cfg.run.dump_states = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run
        .out
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.run.name))
}

fn summary(r: &RunResult) {
    println!(
        "{}: {} chains ({} failed) in {:.3}s",
        r.run_id,
        r.chains.len(),
        r.n_failed(),
        r.wall_clock.as_secs_f64()
    );
    for m in r.metrics.iter().filter(|m| m.step.is_none()) {
        println!("  {:<20} {}", m.metric, m.value);
    }
}

/// Reads `samples.csv` (header row, chain column) or a plain-text matrix.
fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    let m = if text.starts_with("chain") {
        let body: String = text.lines().skip(1).map(|l| format!("{}\n", l.split_once(',').map_or("", |p| p.1))).collect();
        daps::io::parse_matrix(&body)?
    } else {
        daps::io::parse_matrix(&text)?
    };
    PointCloud::uniform(m)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let r = harness::run_experiment(&cfg, &RunOptions { threads: common.threads })?;
            harness::write_run(&r, &out_dir(&cfg), cfg.run.dump_states)?;
            summary(&r);
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            let rows = harness::sweep(&cfg, &axis, &values, &RunOptions { threads: common.threads })?;
            harness::write_sweep(&axis, &rows, &out_dir(&cfg), cfg.run.dump_states)?;
            for row in &rows {
                summary(&row.result);
            }
        }
        Command::BestOf { common, k } => {
            let cfg = load(&common)?;
            let r = harness::best_of_k(&cfg, k, &RunOptions { threads: common.threads })?;
            harness::write_run(&r, &out_dir(&cfg), cfg.run.dump_states)?;
            summary(&r);
            if let Some(i) = r.selected {
                println!("  selected chain       {i}");
            }
        }
        Command::Metrics { a, b, sliced, seed } => {
            let (a, b) = (read_cloud(&a)?, read_cloud(&b)?);
            let w2 = match sliced {
                Some(n) => wasserstein2_sliced(&a, &b, n, &mut aux_rng(seed, 0))?,
                None if a.len() > EXACT_W2_CAP => wasserstein2_sliced(&a, &b, 256, &mut aux_rng(seed, 0))?,
                None => wasserstein2_exact(&a, &b)?,
            };
            println!("{}", daps::io::fmt_f64(w2));
        }
        Command::Presets { name: None } => {
            for (name, about) in presets::preset_names() {
                println!("{name:<24} {about}");
            }
        }
        Command::Presets { name: Some(name) } => print!("{}", presets::preset_text(&name)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
