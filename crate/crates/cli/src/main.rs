use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use valuescope::preference::InputVariant;
use valuescope::runner::{self, Overrides, RunConfig, RunError, Scope, Stage};
use valuescope::NormDimension;

/// Normness scales, preference curves and norm dynamics for comment corpora.
#[derive(Debug, Parser)]
#[command(name = "valuescope", version)]
struct Cli {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory, overriding `run_dir` in the config.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Limit keyed stages to one community.
    #[arg(long, global = true)]
    community: Option<String>,
    /// Limit keyed stages to one dimension.
    #[arg(long, global = true)]
    dimension: Option<NormDimension>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Normness bins for curves and dynamics.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// First period, e.g. 2019-2020.
    #[arg(long, global = true)]
    s1: Option<String>,
    /// Second period, e.g. 2021-2023.
    #[arg(long, global = true)]
    s2: Option<String>,
    /// Preference predictor input, e.g. comment+post+time.
    #[arg(long, global = true)]
    variant: Option<InputVariant>,
    /// Use the in-tree stub backends.
    #[arg(long, global = true)]
    offline: bool,
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse dumps, apply exclusions, write the cleaned comment table.
    Ingest,
    /// Likert-rate comments, draw the stratified sample and comparison pairs.
    Sample,
    /// Judge the sampled pairs.
    Label,
    /// Win-rates on the sample and placement of every comment against it.
    Winrate,
    /// Generate rewrites at each level.
    Simulate,
    /// Apply the rewrite quality filters.
    Filter,
    /// Score preferences and distill deltas.
    ScorePreference,
    /// Bin deltas into curves with PMR and PRD.
    Rpm,
    /// Intensity, crystallization, temporal change and user shifts.
    Dynamics,
    /// Planted-world recovery check.
    Synthbench,
    /// Verify the run directory and join stage outputs.
    Report,
    /// Every stage in order.
    Pipeline,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Sample => Stage::Sample,
            Command::Label => Stage::Label,
            Command::Winrate => Stage::Winrate,
            Command::Simulate => Stage::Simulate,
            Command::Filter => Stage::Filter,
            Command::ScorePreference => Stage::ScorePreference,
            Command::Rpm => Stage::Rpm,
            Command::Dynamics => Stage::Dynamics,
            Command::Synthbench => Stage::Synthbench,
            Command::Report => Stage::Report,
            Command::Pipeline => return None,
        })
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.apply(&Overrides {
        run_dir: cli.run_dir.clone(),
        seed: cli.seed,
        bins: cli.bins,
        s1: cli.s1.clone(),
        s2: cli.s2.clone(),
        variant: cli.variant,
        offline: cli.offline,
    });
    runner::init_workers(cfg.workers);
    let scope = Scope {
        community: cli.community.clone(),
        dimension: cli.dimension,
    };
    let summaries = match cli.command.stage() {
        Some(stage) => vec![runner::run_stage(stage, &cfg, &scope)?],
        None => runner::run_all(&cfg, &scope)?,
    };
    for s in summaries {
        println!(
            "{:<16} {:>4} artifacts  {:>8.2}s",
            s.stage.name(),
            s.artifacts,
            s.seconds
        );
        for n in &s.notes {
            println!("  note: {n}");
        }
    }
    println!("run directory: {}", cfg.run_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
