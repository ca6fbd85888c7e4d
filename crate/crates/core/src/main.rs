use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rare_abc::harness::{self, Algorithm, RunConfig};

#[derive(Parser)]
#[command(name = "rare-abc", version, about = "Rare-event ABC-SMC2, ABC-SMC and ABC-MCMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observed data from a model at its generating parameters.
    Synthesize {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output data file; defaults to the config's data path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run replicated experiments.
    Run {
        #[command(flatten)]
        source: Source,
        /// Observed data file, overriding the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Manifest of an earlier run; its wall-clock time becomes the budget.
        #[arg(long, value_name = "MANIFEST")]
        budget_match: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect results into long-format CSV tables.
    Summarize {
        /// Replicate or experiment manifests, or directories holding them.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Regenerate one replicate from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset as a JSON config.
    Preset {
        name: String,
        #[arg(long, default_value = "re-abc-smc2")]
        algorithm: String,
    },
}

#[derive(Args)]
struct Source {
    /// JSON run config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped scenario: gaussian-d25-small, gaussian-d25-paper, graph-small, graph-paper.
    #[arg(long)]
    preset: Option<String>,
    /// Algorithm, overriding the config.
    #[arg(long)]
    algorithm: Option<String>,
}

impl Source {
    fn load(&self) -> Result<RunConfig> {
        let algorithm = self.algorithm.as_deref().map(str::parse::<Algorithm>).transpose()?;
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, Some(name)) => harness::preset(name, algorithm.unwrap_or(Algorithm::ReAbcSmc2))?,
            (None, None) => bail!("pass --config or --preset"),
        };
        if let Some(a) = algorithm {
            cfg.algorithm = a;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synthesize { source, seed, out } => {
            let cfg = source.load()?;
            let path = out.unwrap_or(cfg.data);
            let manifest = harness::synthesize_data(&cfg.model, seed, &path)?;
            println!("wrote {} (sha256 {})", path.display(), manifest.sha256);
        }
        Command::Run {
            source,
            data,
            seed,
            replicates,
            workers,
            budget_match,
            out,
        } => {
            let mut cfg = source.load()?;
            if let Some(d) = data {
                cfg.data = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if budget_match.is_some() {
                cfg.budget_match = budget_match;
                cfg.stop.budget_secs = None;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let outcome = harness::run_experiment(&cfg)?;
            for m in &outcome.replicates {
                println!(
                    "replicate {}: {} after {} steps, eps {}, mean {:?}, {:.1}s{}",
                    m.replicate,
                    m.stop_reason,
                    m.steps,
                    m.final_epsilon,
                    m.posterior_mean,
                    m.elapsed_secs,
                    m.error.as_deref().map(|e| format!(", error: {e}")).unwrap_or_default()
                );
            }
            if !outcome.all_succeeded() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Summarize { results, out } => {
            let summary = harness::summarize(&results)?;
            let (long, schedule) = harness::write_summary_files(&summary, &out)?;
            println!("wrote {} and {}", long.display(), schedule.display());
        }
        Command::Replay { manifest, out } => {
            let m = harness::replay(&manifest, &out)?;
            println!("replayed replicate {} into {}", m.replicate, out.display());
        }
        Command::Preset { name, algorithm } => {
            let cfg = harness::preset(&name, algorithm.parse()?)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
