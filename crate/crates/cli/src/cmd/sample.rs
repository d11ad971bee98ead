use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;

use mementos::canonical;
use mementos::http::ResponseClass;
use mementos::model::{format_timestamp14, Memento};
use mementos::registry::{ArchiveId, Registry};
use mementos::report::{self, ManifestRow};
use mementos::sampler::{self, DEFAULT_PROBE_SIZE};

use super::timemap::NetArgs;
use super::{load_config, write_file};
use crate::Exit;

pub const SELECTION: &str = "selection.tsv";
pub const BUDGETS: &str = "budgets.csv";

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Manifest written by `discover` (collected.tsv).
    pub manifest: PathBuf,

    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Non-archival failures to keep for tracking.
    #[arg(long, default_value_t = 0)]
    pub keep_quota: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Mementos downloaded per archive to estimate cost.
    #[arg(long, default_value_t = DEFAULT_PROBE_SIZE)]
    pub probe_size: usize,

    /// Skip downloads: no cost probe and no classification.
    #[arg(long)]
    pub offline: bool,

    #[command(flatten)]
    pub net: NetArgs,
}

pub fn run(config: Option<&Path>, args: &SampleArgs) -> Result<Exit> {
    let mut cfg = load_config(config)?;
    args.net.apply(&mut cfg);
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let seed = args.seed.unwrap_or(cfg.seed);

    let text = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let rows = report::parse_manifest(&text)?;
    if rows.is_empty() {
        eprintln!("manifest has no mementos");
        return Ok(Exit::Empty);
    }
    let registry = cfg.registry()?;
    let urirs: HashMap<&str, &str> = rows
        .iter()
        .map(|r| (r.urim.as_str(), r.urir.as_str()))
        .collect();
    let mementos: Vec<Memento> = rows.iter().map(|r| to_memento(r, &registry)).collect();
    let cap = cfg.constraints.max_urims_per_archive;

    let mut archives: Vec<ArchiveId> = mementos.iter().map(|m| m.archive_id.clone()).collect();
    archives.sort();
    archives.dedup();

    let mut budget_lines = String::from("archive,probe_mean_secs,allowed\n");
    let mut budgets: BTreeMap<ArchiveId, usize> = BTreeMap::new();
    let mut classes: HashMap<String, ResponseClass> = HashMap::new();

    let capped = if args.offline {
        for a in &archives {
            budgets.insert(a.clone(), cap);
            let _ = writeln!(budget_lines, "{a},,{cap}");
        }
        sampler::cap_mementos(&mementos, &budgets, seed)
    } else {
        let client = cfg.client()?;
        let mut probe_jobs: Vec<(String, Memento)> = Vec::new();
        for a in &archives {
            let mut own: Vec<&Memento> = mementos.iter().filter(|m| &m.archive_id == a).collect();
            own.sort_by(|x, y| x.urim.cmp(&y.urim));
            probe_jobs.extend(
                own.into_iter()
                    .take(args.probe_size)
                    .map(|m| (a.to_string(), m.clone())),
            );
        }
        let timings = client.run_lanes(probe_jobs.clone(), |c, m| {
            c.timed_download(&m).map(|(_, d)| d).ok()
        });
        let mut per_archive: BTreeMap<&ArchiveId, Vec<Duration>> = BTreeMap::new();
        for ((_, m), t) in probe_jobs.iter().zip(&timings) {
            if let Some(t) = t {
                per_archive.entry(&m.archive_id).or_default().push(*t);
            }
        }
        for a in &archives {
            let probe = per_archive.get(a).map_or(&[][..], Vec::as_slice);
            match sampler::estimate_budget(a, probe, &cfg.constraints) {
                Ok(b) => {
                    let _ = writeln!(
                        budget_lines,
                        "{a},{:.3},{}",
                        b.probe_mean_cost.as_secs_f64(),
                        b.allowed_count
                    );
                    budgets.insert(a.clone(), b.allowed_count);
                }
                Err(e) => {
                    log::warn!("{e}; using the cap of {cap}");
                    let _ = writeln!(budget_lines, "{a},,{cap}");
                    budgets.insert(a.clone(), cap);
                }
            }
        }
        let capped = sampler::cap_mementos(&mementos, &budgets, seed);
        let jobs: Vec<(String, Memento)> = capped
            .iter()
            .map(|m| (m.archive_id.to_string(), m.clone()))
            .collect();
        let fetched = client.run_lanes(jobs, |c, m| c.fetch_raw_memento(&m).map(|f| f.class).ok());
        for (m, class) in capped.iter().zip(fetched) {
            if let Some(class) = class {
                classes.insert(m.urim.clone(), class);
            }
        }
        capped
    };

    let kept = sampler::prune_non_archival(&capped, &classes, args.keep_quota);
    let selected: Vec<ManifestRow> = kept
        .iter()
        .map(|m| {
            let urir = urirs.get(m.urim.as_str()).copied().unwrap_or_default();
            ManifestRow::from_memento(m, urir, classes.get(&m.urim).copied())
        })
        .collect();
    write_file(&out.join(SELECTION), &report::write_manifest(&selected))?;
    write_file(&out.join(BUDGETS), &budget_lines)?;
    for a in &archives {
        let mut lines = String::new();
        for m in kept.iter().filter(|m| &m.archive_id == a) {
            let _ = writeln!(
                lines,
                "{} {}",
                format_timestamp14(&m.memento_datetime),
                m.urim
            );
        }
        write_file(&out.join("compact").join(format!("{a}.txt")), &lines)?;
    }
    eprintln!(
        "{} mementos in, {} after capping, {} after pruning",
        mementos.len(),
        capped.len(),
        kept.len()
    );
    Ok(Exit::Ok)
}

fn to_memento(row: &ManifestRow, registry: &Registry) -> Memento {
    let raw_urim = registry
        .get(row.archive_id.as_str())
        .and_then(|a| a.raw_scheme.raw_urim(&row.urim));
    Memento {
        urim: row.urim.clone(),
        archive_id: row.archive_id.clone(),
        memento_datetime: row.datetime,
        urir_key: canonical::surt(&row.urir).unwrap_or_else(|_| row.urir.clone()),
        raw_urim,
    }
}
