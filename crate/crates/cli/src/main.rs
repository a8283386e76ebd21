//! `distinguish`: misclassification-probability cluster validation from the
//! command line.
//!
//! Every command writes a JSON report to stdout that starts with a
//! provenance block (`tool_version`, `command`, `seed`, `inputs_hash`).
//! Errors go to stderr as JSON. Exit codes: 0 success, 2 bad input,
//! 3 numerical failure, 4 `P_mc` constraint infeasible in `select-k`.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::report::Failure;

#[derive(Parser, Debug)]
#[command(name = "distinguish", version, about = "Cluster validation and merging by misclassification probability")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DISTINGUISH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Numeric CSV input, one row per observation.
    #[arg(long)]
    pub data: PathBuf,

    /// Treat the first row as a header (auto-detected when omitted).
    #[arg(long, conflicts_with = "no_header")]
    pub header: bool,

    /// Treat the first row as data.
    #[arg(long)]
    pub no_header: bool,

    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate P_mc of a mixture model under a cluster configuration.
    Pmc(commands::PmcArgs),
    /// Fit a Gaussian mixture by BIC and merge its components hierarchically.
    Phm(commands::PhmArgs),
    /// Choose the number of clusters under a P_mc ceiling.
    SelectK(commands::SelectKArgs),
    /// Test the first Ward split against a single-Gaussian null.
    HclustTest(commands::HclustTestArgs),
    /// Center, scale and project data onto principal components.
    Preprocess(commands::PreprocessArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if n == 0 {
            return report::fail(Failure::input("invalid_argument", "--threads must be positive"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let outcome = match cli.command {
        Command::Pmc(a) => commands::pmc(a),
        Command::Phm(a) => commands::phm(a),
        Command::SelectK(a) => commands::select_k(a),
        Command::HclustTest(a) => commands::hclust_test(a),
        Command::Preprocess(a) => commands::preprocess(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => report::fail(f),
    }
}
