use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use mementos::client::ArchiveClient;
use mementos::discovery::{
    self, interleave_sources, ArchiveCount, Candidate, Collection, ExpandOptions, SelectOptions,
    SelectionState, SourceStream,
};
use mementos::model::{SourceTag, TimeMapRecord};
use mementos::registry::ArchiveId;
use mementos::report::{self, ManifestRow};

use super::timemap::NetArgs;
use super::{load_config, write_file};
use crate::config::RunConfig;
use crate::Exit;

pub const STATE_FILE: &str = "state.json";
pub const URIR_TABLE: &str = "urirs.tsv";
pub const COLLECTED: &str = "collected.tsv";
pub const STAGE_COUNTS: &str = "stage-counts.csv";

const STAGES: [&str; 4] = ["method1", "method2", "method3", "method4"];

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// Continue from the state file in the output directory.
    #[arg(long)]
    pub resume: bool,

    /// Process at most N seed candidates in this invocation, then save and stop.
    #[arg(long, value_name = "N")]
    pub stop_after: Option<usize>,

    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub net: NetArgs,
}

/// Everything needed to pick a run back up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoverState {
    pub stream_len: usize,
    pub selection: SelectionState,
    /// Per-archive counts after each completed stage.
    pub stages: Vec<(String, BTreeMap<ArchiveId, ArchiveCount>)>,
    /// The collection as of the last completed stage.
    pub records: Vec<TimeMapRecord>,
}

#[derive(Debug, Clone)]
pub struct DiscoverReport {
    pub finished: bool,
    /// True when Method 1 alone satisfied every archive.
    pub later_methods_skipped: bool,
    pub state: DiscoverState,
}

pub fn run(config: Option<&Path>, args: &DiscoverArgs) -> Result<Exit> {
    let mut cfg = load_config(config)?;
    args.net.apply(&mut cfg);
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    let report = execute(&cfg, args.resume, args.stop_after)?;
    if !report.finished {
        eprintln!(
            "paused at candidate {} of {}; rerun with --resume",
            report.state.selection.cursor, report.state.stream_len
        );
    } else if report.later_methods_skipped {
        eprintln!("every archive met its minimum after method 1; methods 2-4 skipped");
    }
    Ok(Exit::Ok)
}

pub fn seed_stream(cfg: &RunConfig) -> Result<Vec<Candidate>> {
    let load = |tag: SourceTag, path: &Option<PathBuf>| -> Result<SourceStream> {
        match path {
            Some(p) => {
                SourceStream::load(tag, p).with_context(|| format!("reading {}", p.display()))
            }
            None => Ok(SourceStream::new(tag, Vec::new())),
        }
    };
    let s = &cfg.sources;
    let moz = load(SourceTag::Moz, &s.moz)?;
    let damage = load(SourceTag::MementoDamage, &s.memento_damage)?;
    let ha = load(SourceTag::HttpArchive, &s.http_archive)?;
    let wahr = s
        .wahr
        .iter()
        .map(|w| load(SourceTag::Wahr(w.hashtag.clone()), &Some(w.path.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(interleave_sources(&moz, &damage, &ha, &wahr))
}

fn save(out: &Path, state: &DiscoverState) -> Result<()> {
    let json = serde_json::to_string(state)?;
    let tmp = out.join(format!("{STATE_FILE}.tmp"));
    write_file(&tmp, &json)?;
    std::fs::rename(&tmp, out.join(STATE_FILE)).context("replacing state file")
}

fn load_state(out: &Path) -> Result<Option<DiscoverState>> {
    let path = out.join(STATE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    ))
}

/// Runs (or resumes) discovery and writes the output tables.
pub fn execute(cfg: &RunConfig, resume: bool, stop_after: Option<usize>) -> Result<DiscoverReport> {
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stream = seed_stream(cfg)?;
    if stream.is_empty() {
        bail!("no seed URIs; configure at least one source list");
    }
    let client = cfg.client()?;
    let d = &cfg.discover;

    let mut state = match resume.then(|| load_state(out)).transpose()?.flatten() {
        Some(s) if s.stream_len != stream.len() => {
            bail!("state file was written for a different seed stream")
        }
        Some(s) => s,
        None => DiscoverState {
            stream_len: stream.len(),
            selection: SelectionState::new(d.quota_per_bucket, d.domain_mode),
            stages: Vec::new(),
            records: Vec::new(),
        },
    };

    if state.stages.is_empty() {
        let opts = SelectOptions {
            target: 5 * d.quota_per_bucket,
            lookahead: d.lookahead,
            max_hops: d.max_hops,
            stop_after: None,
        };
        let mut budget = stop_after.unwrap_or(usize::MAX);
        loop {
            let sel = &state.selection;
            if sel.cursor >= stream.len() || sel.selected.len() >= opts.target || sel.all_full() {
                break;
            }
            if budget == 0 {
                save(out, &state)?;
                return Ok(DiscoverReport {
                    finished: false,
                    later_methods_skipped: false,
                    state,
                });
            }
            let chunk = d.checkpoint_every.max(1).min(budget);
            let outcome = discovery::select_initial(
                &stream,
                &SelectOptions {
                    stop_after: Some(chunk),
                    ..opts.clone()
                },
                &mut state.selection,
                &client,
            );
            budget -= outcome.verdicts.len().min(budget);
            if outcome.verdicts.is_empty() {
                break;
            }
            log::info!(
                "method 1: {} of {} candidates, {} selected",
                state.selection.cursor,
                stream.len(),
                state.selection.selected.len()
            );
            save(out, &state)?;
        }
        let collection = Collection::from_records(
            cfg.constraints.one_per_year,
            state.selection.selected.iter().map(|s| s.timemap.clone()),
        );
        finish_stage(&mut state, STAGES[0], collection, out)?;
    }

    let mut later_methods_skipped = false;
    while state.stages.len() < STAGES.len() {
        let mut collection =
            Collection::from_records(cfg.constraints.one_per_year, state.records.iter().cloned());
        let underfilled = underfilled(&client, &collection, cfg.constraints.min_urirs_per_archive);
        let stage = STAGES[state.stages.len()];
        if underfilled.is_empty() {
            later_methods_skipped |= state.stages.len() == 1;
        } else {
            match stage {
                "method2" => method2(&client, cfg, &underfilled, &mut collection),
                "method3" => method3(&client, cfg, &underfilled, &mut collection)?,
                _ => method4(&client, cfg, &underfilled, &mut collection),
            }
        }
        finish_stage(&mut state, stage, collection, out)?;
    }

    write_outputs(out, &state)?;
    Ok(DiscoverReport {
        finished: true,
        later_methods_skipped,
        state,
    })
}

fn finish_stage(
    state: &mut DiscoverState,
    name: &str,
    collection: Collection,
    out: &Path,
) -> Result<()> {
    state
        .stages
        .push((name.to_string(), collection.counts().clone()));
    state.records = collection.into_records();
    save(out, state)
}

/// Archives in registry order with fewer URI-Rs than `min`.
fn underfilled(client: &ArchiveClient, collection: &Collection, min: usize) -> Vec<ArchiveId> {
    client
        .registry()
        .archives()
        .iter()
        .map(|a| a.id.clone())
        .filter(|id| collection.count(id).urirs < min)
        .collect()
}

fn method2(
    client: &ArchiveClient,
    cfg: &RunConfig,
    archives: &[ArchiveId],
    collection: &mut Collection,
) {
    let opts = ExpandOptions {
        min_urirs: cfg.constraints.min_urirs_per_archive,
        max_new: cfg.discover.method2_max_new,
    };
    for archive in archives {
        let added = discovery::method2_expand(client, archive, collection, &opts);
        log::info!("method 2: {archive} +{} URI-Rs", added.len());
    }
}

fn method3(
    client: &ArchiveClient,
    cfg: &RunConfig,
    archives: &[ArchiveId],
    collection: &mut Collection,
) -> Result<()> {
    for list in &cfg.published_lists {
        let archive = ArchiveId::new(list.archive.as_str());
        if !archives.contains(&archive) {
            continue;
        }
        let text = std::fs::read_to_string(&list.path)
            .with_context(|| format!("reading {}", list.path.display()))?;
        let added = discovery::ingest_published_list(
            client,
            &archive,
            &text,
            list.format,
            cfg.constraints.min_urirs_per_archive,
            collection,
        );
        log::info!("method 3: {archive} +{} records", added.len());
    }
    Ok(())
}

fn method4(
    client: &ArchiveClient,
    cfg: &RunConfig,
    archives: &[ArchiveId],
    collection: &mut Collection,
) {
    let wanted = &cfg.discover.method4_archives;
    for archive in archives {
        let eligible = if wanted.is_empty() {
            client
                .registry()
                .get(archive.as_str())
                .is_some_and(|a| a.memento_native && a.timemap_template.is_some())
        } else {
            wanted.iter().any(|w| w == archive.as_str())
        };
        if !eligible {
            continue;
        }
        match discovery::method4_direct(
            client,
            archive,
            cfg.constraints.min_urirs_per_archive,
            collection,
        ) {
            Ok(added) => log::info!("method 4: {archive} +{} records", added.len()),
            Err(e) => log::warn!("method 4: {archive}: {e}"),
        }
    }
}

fn write_outputs(out: &Path, state: &DiscoverState) -> Result<()> {
    let resources: Vec<_> = state
        .selection
        .selected
        .iter()
        .map(|s| s.resource.clone())
        .collect();
    write_file(&out.join(URIR_TABLE), &report::write_urir_table(&resources))?;
    let rows: Vec<ManifestRow> = state
        .records
        .iter()
        .flat_map(|r| {
            r.mementos
                .iter()
                .map(move |m| ManifestRow::from_memento(m, &r.urir, None))
        })
        .collect();
    write_file(&out.join(COLLECTED), &report::write_manifest(&rows))?;
    write_file(
        &out.join(STAGE_COUNTS),
        &report::stage_counts_csv(&state.stages),
    )
}
