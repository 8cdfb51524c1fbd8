use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use esvi::harness::{run_experiment, RawConfig};

/// Fit a mixture model or LDA with batch VI, SVI or ESVI and write an
/// ELBO / perplexity trace.
#[derive(Debug, Parser)]
#[command(name = "esvi", version)]
struct Cli {
    /// key=value file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    raw: RawConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let base = match cli.config.as_deref().map(RawConfig::load).transpose() {
        Ok(base) => base.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let config = match cli.raw.over(base).resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&config) {
        Ok(trace) => {
            if let Some(last) = trace.last() {
                let ppl = last.perplexity.map_or(String::new(), |p| format!(" perplexity={p:.4}"));
                println!("updates={} seconds={:.3} elbo={:.6}{ppl}", last.updates, last.seconds, last.elbo);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
