use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zy_cli::{execute, load_config, CliError, Command, RunConfig, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "zy", version, about = "Gibbs measure, flow and estimate experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Config file; defaults apply to everything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ZY_WORKERS")]
    workers: Option<u32>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Weighted Gibbs ensembles, one snapshot per (N, gamma, K)
    Sample,
    /// Partition function scan over N and gamma
    GibbsScan,
    /// Integrate the truncated flow and check conservation
    Evolve,
    /// Transport test of Gibbs invariance
    Invariance,
    /// Counting, tensor, random matrix and Strichartz checks
    VerifyEstimates,
    /// All partition norms of one tensor
    Norms,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Sample => Command::Sample,
            Cmd::GibbsScan => Command::GibbsScan,
            Cmd::Evolve => Command::Evolve,
            Cmd::Invariance => Command::Invariance,
            Cmd::VerifyEstimates => Command::VerifyEstimates,
            Cmd::Norms => Command::Norms,
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w as usize)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
    }
    let (report, outputs) = execute(cli.cmd.into(), &cfg, &cli.out)?;
    for l in &report.lines {
        println!("{l}");
    }
    for f in &report.failures {
        println!("GATE FAILURE: {f}");
    }
    println!("config digest {} -> {} files in {}", outputs.digest_hex(), outputs.files.len() + 1, cli.out.display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
