use std::path::PathBuf;
use std::process::ExitCode;

use auxbound_cli::{reproduce, run, CliError, Command, Result, RunConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Scan,
    Bound,
    Region,
    Reproduce,
}

/// Scalar auxiliary bounds for time-varying nonlinear systems.
#[derive(Debug, Parser)]
#[command(name = "auxbound", version)]
struct Args {
    command: Cmd,
    /// JSON run configuration (schemaVersion 1).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Named preset replacing the config's system.
    #[arg(long)]
    preset: Option<String>,
    /// Figure id for `reproduce`.
    #[arg(long)]
    figure: Option<String>,
}

fn threads() -> Result<()> {
    let Ok(v) = std::env::var("AUXBOUND_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("AUXBOUND_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn execute(args: Args) -> Result<Vec<PathBuf>> {
    threads()?;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(args.command, Cmd::Reproduce) || args.preset.is_some() => RunConfig::default(),
        None => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(p) = args.preset {
        cfg.system = Some(auxbound_cli::config::SystemSource::Preset(p));
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    let bundle = match args.command {
        Cmd::Scan => run(Command::Scan, &cfg)?,
        Cmd::Bound => run(Command::Bound, &cfg)?,
        Cmd::Region => run(Command::Region, &cfg)?,
        Cmd::Reproduce => {
            let fig = args.figure.ok_or_else(|| CliError::Config("reproduce needs --figure".into()))?;
            reproduce(&fig, &cfg)?
        }
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("auxbound-out"));
    bundle.write(&dir)
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("auxbound: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
