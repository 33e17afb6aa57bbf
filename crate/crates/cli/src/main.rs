//! `landau`: runs the suite stages and writes JSON/CSV artifacts.
//!
//! Exit codes: 0 when every check that ran passed, 1 when a check failed,
//! 2 for a malformed config (nothing written), 3 when a stage failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landau_core::harness::{run_stages, RunOptions, Stage};
use landau_core::{CheckStatus, Error, SuiteConfig};

#[derive(Parser)]
#[command(name = "landau", version, about = "Spectral laboratory for the linearized Landau operator on a torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the collision operators and run the structure checks.
    Assemble {
        #[command(flatten)]
        common: Common,
        /// Also write the matrices in the binary layout.
        #[arg(long)]
        export: bool,
    },
    /// Estimate tau_hat and delta_hat.
    Gap(Common),
    /// Trace the five fluid branches and fit their dispersion.
    Branches(Common),
    /// Integrate the Picard chain.
    Chain(Common),
    /// Synthesize the Green function and its buckets.
    Decompose(Common),
    /// Run every stage and every enabled acceptance check.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the slow checks (default).
    #[arg(long, conflicts_with = "slow")]
    fast: bool,
    /// Also run the slow checks.
    #[arg(long)]
    slow: bool,
    /// Worker threads; defaults to every core.
    #[arg(long, env = "LANDAU_WORKERS")]
    workers: Option<usize>,
}

fn stages_for(cmd: &Command) -> (&Common, Vec<Stage>, bool) {
    use Stage::*;
    match cmd {
        Command::Assemble { common, export } => (common, vec![Assemble], *export),
        Command::Gap(c) => (c, vec![Assemble, Gap], false),
        Command::Branches(c) => (c, vec![Assemble, Gap, Branches], false),
        Command::Chain(c) => (c, vec![Assemble, Gap, Chain], false),
        Command::Decompose(c) => (c, vec![Assemble, Gap, Chain, Green], false),
        Command::Verify(c) => (c, Stage::ALL.to_vec(), false),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, stages, export) = stages_for(&cli.command);
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool: {e}");
        }
    }
    let cfg = match &common.config {
        Some(p) => SuiteConfig::load(p),
        None => Ok(SuiteConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("landau: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { slow: common.slow || (cfg.slow && !common.fast), export_operators: export };
    let cfg = SuiteConfig { slow: cfg.slow && !common.fast, ..cfg };
    match run_stages(&cfg, &stages, &common.out, opts) {
        Ok(report) => {
            for c in &report.checks {
                println!("{c}");
            }
            for (id, status) in report.summary() {
                println!("{id}: {}", status.label());
            }
            println!("artifacts in {}", common.out.display());
            if report.checks.iter().any(|c| c.status == CheckStatus::Failed) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Error::Config(msg)) => {
            eprintln!("landau: config error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("landau: stage failed: {e} (partial artifacts and MANIFEST.json in {})", common.out.display());
            ExitCode::from(3)
        }
    }
}
