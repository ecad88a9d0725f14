use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use clea_core::agent::{AgentVariant, Budgets, EpisodeTrace};
use clea_core::backend::{RemoteBackend, RemoteConfig};
use clea_core::harness::{
    classify_trace, compute_metrics, emit_report, render_summary, replay, run_suite, BackendMode, Suite, Tallies,
};
use clea_core::world::{load_world, state_digest, WorldConfig};

#[derive(Parser)]
#[command(name = "clea", version, about = "Closed-loop planner-critic agent and trial harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Clea,
    NoCritic,
    Baseline,
}

impl From<VariantArg> for AgentVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Clea => AgentVariant::Clea,
            VariantArg::NoCritic => AgentVariant::NoCritic,
            VariantArg::Baseline => AgentVariant::OpenLoopBaseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run a task suite and write trials.jsonl, summary.md and traces.
    Run {
        /// Suite JSON file; the bundled 12-trial suite when omitted.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Variant to run; repeat for several. All three when omitted.
        #[arg(long, value_enum)]
        variant: Vec<VariantArg>,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendArg,
        /// Chat-completions base URL (remote backend).
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name (remote backend).
        #[arg(long)]
        model: Option<String>,
        /// Remote backend config JSON; --endpoint and --model override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 50)]
        max_steps: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-execute a stored trace and verify its state digests.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Check a world config file and print its initial digest.
    Validate {
        #[arg(long)]
        world: PathBuf,
    },
}

fn remote_mode(endpoint: Option<String>, model: Option<String>, config: Option<PathBuf>) -> Result<BackendMode> {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            RemoteConfig::from_json(&text)?
        }
        None => RemoteConfig::new("", ""),
    };
    if let Some(e) = endpoint {
        cfg.base_url = e;
    }
    if let Some(m) = model {
        cfg.model = m;
    }
    Ok(BackendMode::Remote(Arc::new(RemoteBackend::new(cfg)?)))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            suite,
            variant,
            backend,
            endpoint,
            model,
            config,
            seed,
            workers,
            max_steps,
            out,
        } => {
            let suite = match suite {
                Some(p) => Suite::load(&p)?,
                None => Suite::builtin_default(),
            };
            let mut variants: Vec<AgentVariant> = variant.into_iter().map(Into::into).collect();
            if variants.is_empty() {
                variants = AgentVariant::ALL.to_vec();
            }
            variants.sort();
            variants.dedup();
            let mode = match backend {
                BackendArg::Scripted => BackendMode::Scripted,
                BackendArg::Remote => remote_mode(endpoint, model, config)?,
            };
            let budgets = Budgets {
                max_steps,
                ..Budgets::default()
            };
            budgets.validate().map_err(anyhow::Error::msg)?;
            let run = run_suite(&suite, &variants, &mode, seed, workers, budgets);
            let metrics = compute_metrics(&run.results)?;
            let mut tallies = Tallies::default();
            for t in &run.traces {
                tallies.merge(&classify_trace(t));
            }
            emit_report(&out, &run.results, &run.traces, &metrics, &tallies)
                .with_context(|| format!("writing report to {}", out.display()))?;
            print!("{}", render_summary(&metrics, &tallies));
            println!("\nreport written to {}", out.display());
        }
        Command::Replay { trace } => {
            let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let t = EpisodeTrace::read_jsonl(BufReader::new(file))?;
            let s = replay(&t)?;
            println!(
                "replay ok: {} actions, {} perturbations, final digest {}",
                s.executed, s.perturbations, s.final_digest
            );
        }
        Command::Validate { world } => {
            let text = std::fs::read_to_string(&world).with_context(|| format!("reading {}", world.display()))?;
            let cfg = WorldConfig::from_json(&text)?;
            let (_, state) = match load_world(cfg) {
                Ok(v) => v,
                Err(e) => bail!("invalid world: {e}"),
            };
            println!("world ok, initial digest {}", state_digest(&state));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
