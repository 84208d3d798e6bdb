use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use riskpart::config::LoadedConfig;
use riskpart::runner::{cmd_cv, cmd_generate, cmd_optimize, cmd_report, RunContext};
use riskpart::{Error, Result};

/// Risk-group partitioning over diagnosis histories: synthetic data,
/// annealing over labeled partitions, cross-validation, and reporting.
#[derive(Parser)]
#[command(name = "riskpart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory. Defaults to [output].dir from the config, then
    /// `out` next to the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 meaning all cores. Overrides RISKPART_THREADS and
    /// the config's `threads`.
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset, its planted partition, and the true
    /// coefficients.
    Generate(#[command(flatten)] CommonArgs),
    /// Anneal partitions over the (k, lambda, temperature) grid and record
    /// traces, best partitions, and a run summary.
    Optimize(#[command(flatten)] CommonArgs),
    /// Cross-validate regression specifications, including any saved
    /// partition files.
    Cv(#[command(flatten)] CommonArgs),
    /// Render a markdown report from an optimize run directory.
    Report {
        /// Directory written by `optimize` (contains summary.json).
        run_dir: PathBuf,
        /// Report path. Defaults to report.md inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress progress output on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() {
    // Usage problems exit 1; clap's default of 2 is reserved for data and
    // runtime failures. Help and version stay exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(match e {
            Error::Usage(_) => 1,
            Error::Grid(_) => 3,
            _ => 2,
        });
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => with_config(args, cmd_generate),
        Command::Optimize(args) => with_config(args, cmd_optimize),
        Command::Cv(args) => with_config(args, cmd_cv),
        Command::Report { run_dir, out, quiet } => cmd_report(&run_dir, out.as_deref(), quiet),
    }
}

fn with_config(
    args: CommonArgs,
    cmd: fn(&LoadedConfig, &RunContext, Option<u64>) -> Result<()>,
) -> Result<()> {
    let cfg = LoadedConfig::load(&args.config)?;
    let env = std::env::var("RISKPART_THREADS").ok();
    let threads = cfg.threads(args.threads, env.as_deref())?;
    let ctx = RunContext {
        out_dir: cfg.out_dir(args.out.as_deref()),
        quiet: args.quiet,
    };
    if threads == 0 {
        return cmd(&cfg, &ctx, args.seed);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::usage(format!("cannot build a {threads}-thread pool: {e}")))?;
    pool.install(|| cmd(&cfg, &ctx, args.seed))
}
