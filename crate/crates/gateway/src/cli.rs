//! The `feedsim` command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use feeder_core::harness::{config, TrialKind, TrialSpec};
use feeder_core::simenv::{SimConfig, World};

#[derive(Parser, Debug)]
#[command(
    name = "feedsim",
    about = "Pet feeder simulator: trials and live gateway"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Trial {
    Sms,
    Dispense,
    Endurance,
    Power,
}

impl From<Trial> for TrialKind {
    fn from(t: Trial) -> Self {
        match t {
            Trial::Sms => TrialKind::Sms,
            Trial::Dispense => TrialKind::Dispense,
            Trial::Endurance => TrialKind::Endurance,
            Trial::Power => TrialKind::Power,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one trial and write report.json, trace.ndjson and summary.txt.
    Run {
        trial: Trial,
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 30)]
        days: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Power trial length in seconds.
        #[arg(long, default_value_t = 600)]
        duration: u64,
        /// Power trial FEED times in seconds, comma separated.
        #[arg(long, value_delimiter = ',')]
        feed_at: Vec<u64>,
        /// Endurance trial without daily refills.
        #[arg(long)]
        no_refills: bool,
    },
    /// Serve one live simulation over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the default config file.
    Config,
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            config::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            trial,
            n,
            days,
            seed,
            config,
            out,
            duration,
            feed_at,
            no_refills,
        } => {
            let spec = TrialSpec {
                kind: trial.into(),
                n,
                days,
                duration_s: duration,
                feed_at_s: feed_at,
                refills: !no_refills,
                seed,
                config: load_config(config.as_deref())?,
            };
            let outcome = spec.run()?;
            outcome.write_to(&out)?;
            print!("{}", outcome.summary);
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Serve { port, seed, config } => {
            let world = World::new(load_config(config.as_deref())?, seed)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::serve(world, SocketAddr::from(([0, 0, 0, 0], port))))
        }
        Command::Config => {
            print!("{}", config::render(&SimConfig::default()));
            Ok(())
        }
    }
}
