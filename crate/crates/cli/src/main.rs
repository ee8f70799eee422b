//! `reviewlens`: the review analytics pipeline as composable subcommands.
//!
//! Stages read their predecessors' artifacts from the output directory:
//! ingest -> sweep -> fit -> {graph, link, panel, cluster} -> report.
//! Panel and cluster also read the topic polarity written by graph.

mod artifacts;
mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use artifacts::{Ctx, Stage};
use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("`{stage}` needs the output of `{needs}`; run `reviewlens {needs}` first")]
    MissingUpstream { stage: &'static str, needs: &'static str },
    #[error(transparent)]
    Core(#[from] reviewlens_core::Error),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Compute(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Compute(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingUpstream { .. } => 2,
            CliError::Core(_) | CliError::Compute(_) => 3,
        }
    }
}

/// Topic models, rating links, fixed-effects panels and review clusters from
/// free-text service reviews.
#[derive(Debug, Parser)]
#[command(name = "reviewlens", version, about)]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Base seed (overrides `seed`; REVIEWLENS_SEED overrides both).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads`; default: available cores).
    #[arg(short = 'j', long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load reviews and metadata, enrich, build the pruned corpus.
    Ingest,
    /// Fit one topic model per K and select K by coherence + exclusivity.
    Sweep,
    /// Fit the final topic model.
    Fit {
        /// Topic count; skips the dependency on `sweep`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Topic similarity graph, Louvain communities and polarity.
    Graph,
    /// Random forests, OLS and lasso linking topics to star ratings.
    Link,
    /// CCG x month panel and two-way fixed-effects models.
    Panel,
    /// k-means clusters of reviews over topic proportions.
    Cluster,
    /// Collate a JSON and text summary of every stage.
    Report,
    /// Run every stage in order, independent stages concurrently.
    All {
        /// Topic count; skips `sweep`.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Ok(s) = std::env::var("REVIEWLENS_SEED") {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("REVIEWLENS_SEED `{s}`: {e}")))?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    match &cli.command {
        Command::Fit { k: Some(k) } | Command::All { k: Some(k) } => cfg.topics.k = Some(*k),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_stage(ctx: &Ctx, stage: Stage) -> Result<(), CliError> {
    let r = match stage {
        Stage::Ingest => stages::ingest(ctx),
        Stage::Sweep => stages::sweep(ctx),
        Stage::Fit => stages::fit(ctx),
        Stage::Graph => stages::graph(ctx),
        Stage::Link => stages::link(ctx),
        Stage::Panel => stages::panel(ctx),
        Stage::Cluster => stages::cluster(ctx),
        Stage::Report => stages::report(ctx),
    };
    if let Err(e) = &r {
        if e.exit_code() == 3 {
            write_diagnostics(ctx, stage, e);
        }
    }
    r
}

fn write_diagnostics(ctx: &Ctx, stage: Stage, e: &CliError) {
    let dir = ctx.dir(stage);
    let mut text = format!(
        "stage: {}\nconfig_hash: {}\nseed: {}\nerror: {e}\n",
        stage.name(),
        ctx.cfg.fingerprint(),
        ctx.seed()
    );
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        text += &format!("caused by: {s}\n");
        source = s.source();
    }
    let path = dir.join("diagnostics.txt");
    if let Err(err) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, text)) {
        log::error!("cannot write {}: {err}", path.display());
    } else {
        eprintln!("diagnostics written to {}", path.display());
    }
}

fn run_all(ctx: &Ctx) -> Result<(), CliError> {
    run_stage(ctx, Stage::Ingest)?;
    if ctx.cfg.topics.k.is_none() {
        run_stage(ctx, Stage::Sweep)?;
    }
    run_stage(ctx, Stage::Fit)?;
    let (link, graph) = rayon::join(
        || run_stage(ctx, Stage::Link),
        || {
            run_stage(ctx, Stage::Graph)?;
            let (p, c) = rayon::join(|| run_stage(ctx, Stage::Panel), || run_stage(ctx, Stage::Cluster));
            p.and(c)
        },
    );
    link.and(graph)?;
    run_stage(ctx, Stage::Report)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    log::debug!("{threads} worker threads, seed {}", cfg.seed);
    let ctx = Ctx { out: cfg.output_dir.clone(), cfg };
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Usage(format!("{}: {e}", ctx.out.display())))?;
    match cli.command {
        Command::Ingest => run_stage(&ctx, Stage::Ingest),
        Command::Sweep => run_stage(&ctx, Stage::Sweep),
        Command::Fit { .. } => run_stage(&ctx, Stage::Fit),
        Command::Graph => run_stage(&ctx, Stage::Graph),
        Command::Link => run_stage(&ctx, Stage::Link),
        Command::Panel => run_stage(&ctx, Stage::Panel),
        Command::Cluster => run_stage(&ctx, Stage::Cluster),
        Command::Report => run_stage(&ctx, Stage::Report),
        Command::All { .. } => run_all(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
