use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use mementos::client::ClientError;
use mementos::linkformat::{
    parse_compact, serialize_compact, serialize_link_format, yearly_first_filter, TimeMapParser,
};
use mementos::model::{parse_timestamp14, Provenance, TimeMapRecord};
use mementos::registry::{ArchiveId, Registry};
use mementos::transport::TransportError;

use super::load_config;
use crate::Exit;

#[derive(Debug, Args)]
pub struct TimemapArgs {
    pub urir: String,

    /// Ask this archive directly instead of the aggregator.
    #[arg(long, value_name = "ARCHIVE")]
    pub direct: Option<String>,

    /// Keep the first memento per archive per year.
    #[arg(long)]
    pub filter_yearly: bool,

    /// Print `timestamp urim` lines instead of link format.
    #[arg(long)]
    pub compact: bool,

    /// Read the TimeMap from a file (link format or compact) instead of the network.
    #[arg(long, value_name = "FILE", conflicts_with = "direct")]
    pub from_file: Option<PathBuf>,

    #[command(flatten)]
    pub net: NetArgs,
}

/// Flags shared by the network-touching subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct NetArgs {
    /// Replay recorded responses from this directory.
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,

    /// Aggregator TimeMap template containing `{urir}`.
    #[arg(long, value_name = "TEMPLATE")]
    pub aggregator: Option<String>,

    /// Archive registry TOML.
    #[arg(long, value_name = "FILE")]
    pub registry: Option<PathBuf>,

    #[arg(long, value_name = "URL")]
    pub proxy: Option<String>,
}

impl NetArgs {
    pub fn apply(&self, cfg: &mut crate::config::RunConfig) {
        if let Some(f) = &self.fixtures {
            cfg.fixtures = Some(f.clone());
        }
        if let Some(a) = &self.aggregator {
            cfg.aggregator = a.clone();
        }
        if let Some(r) = &self.registry {
            cfg.registry = Some(r.clone());
        }
        if let Some(p) = &self.proxy {
            cfg.proxy = Some(p.clone());
        }
    }
}

pub fn run(config: Option<&Path>, args: &TimemapArgs) -> Result<Exit> {
    let mut cfg = load_config(config)?;
    args.net.apply(&mut cfg);

    let fetched = match &args.from_file {
        Some(path) => read_local(path, &args.urir, &*cfg.registry()?),
        None => {
            let client = cfg.client()?;
            match &args.direct {
                Some(a) => client.fetch_timemap_direct(&ArchiveId::new(a.as_str()), &args.urir),
                None => client.fetch_timemap_aggregator(&args.urir),
            }
        }
    };
    let record = match fetched {
        Ok(r) => r,
        Err(ClientError::EmptyTimeMap(u)) => {
            eprintln!("no mementos for {u}");
            return Ok(Exit::Empty);
        }
        Err(e) => return Err(e).context(format!("fetching TimeMap of {}", args.urir)),
    };
    let record = if args.filter_yearly {
        yearly_first_filter(record)
    } else {
        record
    };
    if args.compact {
        print!("{}", serialize_compact(&record));
    } else {
        print!("{}", serialize_link_format(&record));
    }
    Ok(Exit::Ok)
}

fn read_local(path: &Path, urir: &str, registry: &Registry) -> Result<TimeMapRecord, ClientError> {
    let body = std::fs::read(path).map_err(|e| ClientError::Network {
        uri: path.display().to_string(),
        source: TransportError::Io(e.to_string()),
    })?;
    let text = String::from_utf8_lossy(&body);
    let looks_compact = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.split_whitespace().next())
        .is_some_and(|t| parse_timestamp14(t).is_some());
    let record = if looks_compact {
        parse_compact(&text, urir, registry, Provenance::Aggregator)?
    } else {
        TimeMapParser::new(registry).parse(&body, Some(urir))?
    };
    if record.is_empty() {
        return Err(ClientError::EmptyTimeMap(urir.to_string()));
    }
    Ok(record)
}
