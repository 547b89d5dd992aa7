use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use tenantsched::commands::{cmd_compare, cmd_eval, cmd_gen_trace, cmd_sweep, cmd_train};
use tenantsched::{RunConfig, SweepMode};

/// Multi-tenant cluster scheduling experiments.
#[derive(Parser)]
#[command(name = "tenantsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace drawn from the configured workload.
    GenTrace(Common),
    /// Train a policy; writes a checkpoint and the training curve.
    Train(Common),
    /// Evaluate the trained policy greedily.
    Eval(Common),
    /// Compare schedulers on identical episodes.
    Compare(Common),
    /// Load-phase or capacity-fluctuation sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "load_phases")]
        mode: SweepMode,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated scheduler names, e.g. `fifo,random,rl`.
    #[arg(long, value_delimiter = ',')]
    schedulers: Option<Vec<String>>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(s) = &self.schedulers {
            cfg.schedulers = s.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::GenTrace(c) => {
            let cfg = c.load()?;
            Ok(vec![cmd_gen_trace(&cfg, &cfg.out_dir.join("trace.csv"))?])
        }
        Command::Train(c) => cmd_train(&c.load()?),
        Command::Eval(c) => cmd_eval(&c.load()?),
        Command::Compare(c) => cmd_compare(&c.load()?),
        Command::Sweep { common, mode } => cmd_sweep(&common.load()?, mode),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
