use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use steerkit::cli::{
    cmd_directions, cmd_eval, cmd_extract, cmd_norms, cmd_search, cmd_sweep, resolve_out,
    Overrides, RunConfig,
};

/// Attention-head steering toolkit: graph extraction, steering directions,
/// divide-and-conquer head search, evaluation and robustness sweeps.
#[derive(Parser)]
#[command(name = "steerkit", version, about)]
struct Cli {
    /// Run configuration file (TOML or JSON).
    #[arg(long, global = true, env = "STEERKIT_CONFIG")]
    config: Option<PathBuf>,

    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true, env = "STEERKIT_SEED")]
    seed: Option<u64>,

    /// Worker threads for parallel sections (0 = available cores).
    #[arg(long, global = true, env = "STEERKIT_JOBS")]
    jobs: Option<usize>,

    /// Output directory (default: runs/<command>).
    #[arg(long, global = true, env = "STEERKIT_OUT")]
    out: Option<PathBuf>,

    /// Cases file (JSONL: id, requirement, triples[], label).
    #[arg(long, global = true, env = "STEERKIT_CASES")]
    cases: Option<PathBuf>,

    /// Prompt template file with {triples} and {requirement} placeholders.
    #[arg(long, global = true, env = "STEERKIT_TEMPLATE")]
    template: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract triple graphs from a system model for each requirement.
    Extract {
        /// System model JSON export.
        #[arg(long)]
        model: PathBuf,
        /// Requirements JSONL (id, requirement).
        #[arg(long)]
        requirements: PathBuf,
        #[arg(long)]
        max_triples: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Capture activations and compute contrastive steering directions.
    Directions,
    /// Full pipeline: capture, directions, divide, conquer.
    Search {
        /// Self-consistency factor during evaluation.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha0: Option<f64>,
        #[arg(long)]
        min_precision: Option<f64>,
        #[arg(long)]
        min_recall: Option<f64>,
    },
    /// Evaluate one intervention config (or the baseline) over the cases.
    Eval {
        /// Intervention config JSON; omit for the baseline.
        #[arg(long)]
        intervention: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Alpha/temperature robustness sweep -> CSV.
    Sweep {
        #[arg(long)]
        intervention: Option<PathBuf>,
        /// Repetitions per grid cell.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Per-token activation-norm profile -> CSV.
    Norms {
        /// Raw prompt text.
        #[arg(long)]
        text: Option<String>,
        /// Build the prompt from this case id instead.
        #[arg(long)]
        case_id: Option<String>,
        /// Comma-separated layer:head list; default all heads.
        #[arg(long)]
        heads: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract { .. } => "extract",
            Command::Directions => "directions",
            Command::Search { .. } => "search",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Norms { .. } => "norms",
        }
    }
}

fn run(cli: Cli) -> steerkit::Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };

    let mut overrides = Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        cases: cli.cases.clone(),
        template: cli.template.clone(),
        ..Default::default()
    };
    match &cli.command {
        Command::Extract {
            max_triples, top_k, ..
        } => {
            overrides.max_triples = *max_triples;
            overrides.top_k = *top_k;
        }
        Command::Search {
            k,
            alpha0,
            min_precision,
            min_recall,
        } => {
            overrides.k = *k;
            overrides.alpha0 = *alpha0;
            overrides.min_precision = *min_precision;
            overrides.min_recall = *min_recall;
        }
        Command::Eval { k, .. } => overrides.k = *k,
        Command::Sweep { reps, .. } => overrides.repetitions = *reps,
        _ => {}
    }
    cfg.apply(&overrides);
    cfg.out = match &cli.out {
        Some(out) => resolve_out(out, cli.command.name(), true),
        None => resolve_out(&cfg.out, cli.command.name(), false),
    };

    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .ok();
    }

    match &cli.command {
        Command::Extract {
            model,
            requirements,
            ..
        } => cmd_extract(&cfg, model, requirements),
        Command::Directions => cmd_directions(&cfg),
        Command::Search { .. } => cmd_search(&cfg),
        Command::Eval { intervention, .. } => cmd_eval(&cfg, intervention.as_deref()),
        Command::Sweep { intervention, .. } => cmd_sweep(&cfg, intervention.as_deref()),
        Command::Norms {
            text,
            case_id,
            heads,
        } => cmd_norms(&cfg, text.as_deref(), case_id.as_deref(), heads.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
