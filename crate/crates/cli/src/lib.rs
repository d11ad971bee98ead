//! Subcommands of the `mementos` binary.

pub mod cmd;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Partial = 1,
    Usage = 2,
    Empty = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mementos",
    version,
    about = "Discover, filter and sample mementos across web archives"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "MEMENTOS_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the SURT form of each URI.
    Canon(cmd::canon::CanonArgs),
    /// Fetch a TimeMap from the aggregator or one archive.
    Timemap(cmd::timemap::TimemapArgs),
    /// Run the discovery methods and write the collected dataset.
    Discover(cmd::discover::DiscoverArgs),
    /// Budget, cap and prune a collected manifest.
    Sample(cmd::sample::SampleArgs),
    /// Summary tables from a manifest.
    Stats(cmd::stats::StatsArgs),
}

pub fn run(cli: Cli) -> Exit {
    let result = match cli.command {
        Command::Canon(args) => Ok(cmd::canon::run(&args)),
        Command::Timemap(args) => cmd::timemap::run(cli.config.as_deref(), &args),
        Command::Discover(args) => cmd::discover::run(cli.config.as_deref(), &args),
        Command::Sample(args) => cmd::sample::run(cli.config.as_deref(), &args),
        Command::Stats(args) => cmd::stats::run(&args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        Exit::Partial
    })
}
