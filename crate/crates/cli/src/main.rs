//! `tcfbm`: run one experiment described by a JSON config.
//!
//! Exit codes: 0 success or inequality pass, 1 config/runtime error,
//! 2 inequality fail, 3 divergence.

mod config;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::output::Provenance;
use crate::tasks::Status;

#[derive(Debug, Parser)]
#[command(name = "tcfbm", version, about = "Experiments for SDEs driven by time-changed fractional Brownian motion")]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let start = Instant::now();
    let (task, status) = match execute(&args) {
        Ok(v) => v,
        Err((task, e)) => {
            let code = match e.downcast_ref::<tcfbm::Error>() {
                Some(tcfbm::Error::Divergence(_)) => 3,
                _ => 1,
            };
            eprintln!("error: {e:#}");
            println!("{task}: error ({:.3} s)", start.elapsed().as_secs_f64());
            return ExitCode::from(code);
        }
    };
    let verdict = match &status {
        Status::Done => "done".to_string(),
        Status::Pass => "pass".to_string(),
        Status::Fail => "fail".to_string(),
        Status::Diverged(reason) => {
            eprintln!("divergence: {reason}");
            "diverged".to_string()
        }
    };
    println!("{task}: {verdict} ({:.3} s)", start.elapsed().as_secs_f64());
    ExitCode::from(status.exit_code() as u8)
}

fn execute(args: &Args) -> Result<(&'static str, Status), (&'static str, anyhow::Error)> {
    let loaded = config::load(&args.config).map_err(|e| ("config", e))?;
    let task = loaded.config.task.name();
    let fail = |e: anyhow::Error| (task, e);
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(fail(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| fail(e.into()))?;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| fail(e.into()))?;
    let prov = Provenance {
        task,
        config_hash: loaded.hash,
        seed: args.seed.unwrap_or(loaded.config.run.seed),
    };
    let status = tasks::run(&loaded.config, &args.out, &prov).map_err(fail)?;
    Ok((task, status))
}
