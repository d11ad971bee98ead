//! Finding URI-Rs and their mementos.
//!
//! Method 1 scans an interleaved stream of seed URIs and keeps those that
//! pass four conditions. Methods 2 to 4 top up archives that end up with too
//! few URI-Rs: links extracted from raw mementos, lists published by the
//! archives, and TimeMaps requested from the archive itself.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::io;
use std::path::Path;

use chrono::NaiveDate;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::batch;
use crate::canonical::{self, DomainKeyMode, RedirectChain, DEFAULT_MAX_HOPS};
use crate::client::{ArchiveClient, ClientError};
use crate::linkformat::{dedupe, original_from_urim, parse_compact_lines, yearly_first_filter};
use crate::model::{Memento, OriginalResource, PathBucket, Provenance, SourceTag, TimeMapRecord};
use crate::registry::ArchiveId;

pub const ROUND_SIZE: usize = 10;
pub const DEFAULT_QUOTA_PER_BUCKET: usize = 2_000;

/// One seed list, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceStream {
    pub tag: SourceTag,
    pub uris: Vec<String>,
    pub access_time: Option<(NaiveDate, NaiveDate)>,
}

impl SourceStream {
    pub fn new(tag: SourceTag, uris: Vec<String>) -> Self {
        SourceStream {
            tag,
            uris,
            access_time: None,
        }
    }

    /// One URI per line; blank lines and `#` comments are skipped.
    pub fn parse(tag: SourceTag, text: &str) -> Self {
        SourceStream::new(tag, parse_uri_lines(text))
    }

    pub fn load(tag: SourceTag, path: &Path) -> io::Result<Self> {
        Ok(SourceStream::parse(tag, &std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.uris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uris.is_empty()
    }
}

pub fn parse_uri_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub uri: String,
    pub source: SourceTag,
}

/// Moz first, then the damage list, then rounds of ten HTTP Archive URIs
/// and ten URIs from the next WAHR hashtag. A URI seen in an earlier source
/// (in that priority order) is dropped from later ones.
pub fn interleave_sources(
    moz: &SourceStream,
    damage: &SourceStream,
    httparchive: &SourceStream,
    wahr: &[SourceStream],
) -> Vec<Candidate> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut unique = |s: &SourceStream| -> VecDeque<Candidate> {
        s.uris
            .iter()
            .filter(|u| seen.insert(u.to_string()))
            .map(|u| Candidate {
                uri: u.clone(),
                source: s.tag.clone(),
            })
            .collect()
    };
    let mut out: Vec<Candidate> = Vec::new();
    out.extend(unique(moz));
    out.extend(unique(damage));
    let mut ha = unique(httparchive);
    let mut tags: Vec<VecDeque<Candidate>> = wahr.iter().map(&mut unique).collect();
    let mut next_tag = 0;
    while !ha.is_empty() || tags.iter().any(|t| !t.is_empty()) {
        let take = ROUND_SIZE.min(ha.len());
        out.extend(ha.drain(..take));
        if let Some(offset) =
            (0..tags.len()).find(|i| !tags[(next_tag + i) % tags.len()].is_empty())
        {
            let n = tags.len();
            let t = &mut tags[(next_tag + offset) % n];
            let take = ROUND_SIZE.min(t.len());
            out.extend(t.drain(..take));
            next_tag = (next_tag + offset + 1) % n;
        }
    }
    out
}

/// Network checks that Method 1 needs for each candidate.
pub trait CandidateProbe: Sync {
    fn resolve(&self, uri: &str, max_hops: usize) -> Result<RedirectChain, String>;
    /// `Ok(None)` when the TimeMap has no mementos.
    fn timemap(&self, urir: &str) -> Result<Option<TimeMapRecord>, String>;
}

impl CandidateProbe for ArchiveClient {
    fn resolve(&self, uri: &str, max_hops: usize) -> Result<RedirectChain, String> {
        self.resolve_redirects(uri, max_hops)
            .map_err(|e| e.to_string())
    }

    fn timemap(&self, urir: &str) -> Result<Option<TimeMapRecord>, String> {
        match self.fetch_timemap_aggregator(urir) {
            Ok(r) => Ok(Some(r)),
            Err(ClientError::EmptyTimeMap(_)) => Ok(None),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selected {
    pub resource: OriginalResource,
    pub timemap: TimeMapRecord,
}

/// Progress of the Method 1 scan; serializable so a run can resume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionState {
    pub quota_per_bucket: usize,
    pub domain_mode: DomainKeyMode,
    /// Canonical keys of accepted URI-Rs (after redirects).
    pub chosen: BTreeSet<String>,
    /// SURTs of accepted URI-Rs as they appeared in the stream.
    pub chosen_input_keys: BTreeSet<String>,
    pub chosen_domains_per_bucket: BTreeMap<PathBucket, BTreeSet<String>>,
    pub bucket_counts: BTreeMap<PathBucket, usize>,
    /// Stream position of the next candidate.
    pub cursor: usize,
    pub selected: Vec<Selected>,
}

impl SelectionState {
    pub fn new(quota_per_bucket: usize, domain_mode: DomainKeyMode) -> Self {
        SelectionState {
            quota_per_bucket,
            domain_mode,
            chosen: BTreeSet::new(),
            chosen_input_keys: BTreeSet::new(),
            chosen_domains_per_bucket: BTreeMap::new(),
            bucket_counts: PathBucket::ALL.iter().map(|b| (*b, 0)).collect(),
            cursor: 0,
            selected: Vec::new(),
        }
    }

    pub fn bucket_count(&self, bucket: PathBucket) -> usize {
        self.bucket_counts.get(&bucket).copied().unwrap_or(0)
    }

    pub fn bucket_full(&self, bucket: PathBucket) -> bool {
        self.bucket_count(bucket) >= self.quota_per_bucket
    }

    pub fn all_full(&self) -> bool {
        PathBucket::ALL.iter().all(|b| self.bucket_full(*b))
    }

    fn domain_taken(&self, bucket: PathBucket, domain: &str) -> bool {
        self.chosen_domains_per_bucket
            .get(&bucket)
            .is_some_and(|d| d.contains(domain))
    }

    fn admit(&mut self, input_key: String, domain: String, selected: Selected) {
        let bucket = selected.resource.path_bucket;
        self.chosen.insert(selected.resource.canonical_key.clone());
        self.chosen_input_keys.insert(input_key);
        self.chosen_domains_per_bucket
            .entry(bucket)
            .or_default()
            .insert(domain);
        *self.bucket_counts.entry(bucket).or_insert(0) += 1;
        self.selected.push(selected);
    }
}

impl Default for SelectionState {
    fn default() -> Self {
        SelectionState::new(DEFAULT_QUOTA_PER_BUCKET, DomainKeyMode::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Duplicate,
    BucketFull,
    DomainTaken,
    EmptyTimeMap,
    Malformed,
    Unreachable,
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    /// Stop once this many URI-Rs are selected in total.
    pub target: usize,
    /// Candidates probed concurrently ahead of the decision point.
    pub lookahead: usize,
    pub max_hops: usize,
    /// Process at most this many further candidates, then return.
    pub stop_after: Option<usize>,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            target: 5 * DEFAULT_QUOTA_PER_BUCKET,
            lookahead: 16,
            max_hops: DEFAULT_MAX_HOPS,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelectOutcome {
    /// One verdict per candidate processed in this call, in stream order.
    pub verdicts: Vec<Verdict>,
    pub exhausted: bool,
}

enum Probed {
    Rejected(Verdict),
    Passed {
        input_key: String,
        domain: String,
        resource: OriginalResource,
        timemap: Box<TimeMapRecord>,
    },
}

fn probe_candidate(
    c: &Candidate,
    state: &SelectionState,
    probe: &dyn CandidateProbe,
    max_hops: usize,
) -> Probed {
    let Ok(input_key) = canonical::surt(&c.uri) else {
        return Probed::Rejected(Verdict::Malformed);
    };
    if state.chosen_input_keys.contains(&input_key) || state.chosen.contains(&input_key) {
        return Probed::Rejected(Verdict::Duplicate);
    }
    let chain = match probe.resolve(&c.uri, max_hops) {
        Ok(chain) => chain,
        Err(e) => {
            log::info!("skipping {}: {e}", c.uri);
            return Probed::Rejected(Verdict::Unreachable);
        }
    };
    let resource = match OriginalResource::new(
        c.uri.clone(),
        chain.final_uri.clone(),
        c.source.clone(),
        Some(chain.terminal_status),
    ) {
        Ok(r) => r,
        Err(_) => return Probed::Rejected(Verdict::Malformed),
    };
    let Ok(domain) = canonical::domain_key(&resource.final_uri, state.domain_mode) else {
        return Probed::Rejected(Verdict::Malformed);
    };
    if let Some(v) = precheck(state, &input_key, &resource, &domain) {
        return Probed::Rejected(v);
    }
    match probe.timemap(&resource.final_uri) {
        Ok(Some(timemap)) if !timemap.is_empty() => Probed::Passed {
            input_key,
            domain,
            resource,
            timemap: Box::new(timemap),
        },
        Ok(_) => Probed::Rejected(Verdict::EmptyTimeMap),
        Err(e) => {
            log::info!("skipping {}: {e}", c.uri);
            Probed::Rejected(Verdict::Unreachable)
        }
    }
}

fn precheck(
    state: &SelectionState,
    input_key: &str,
    resource: &OriginalResource,
    domain: &str,
) -> Option<Verdict> {
    if state.chosen_input_keys.contains(input_key) || state.chosen.contains(&resource.canonical_key)
    {
        Some(Verdict::Duplicate)
    } else if state.bucket_full(resource.path_bucket) {
        Some(Verdict::BucketFull)
    } else if state.domain_taken(resource.path_bucket, domain) {
        Some(Verdict::DomainTaken)
    } else {
        None
    }
}

/// Scans `stream` from `state.cursor`. A candidate is accepted when it is
/// not the same resource as an accepted one, its bucket has room, its
/// domain is unused in that bucket, and its TimeMap is nonempty.
///
/// Candidates in a look-ahead window are probed concurrently; decisions are
/// applied in stream order, so the result does not depend on the window.
pub fn select_initial(
    stream: &[Candidate],
    opts: &SelectOptions,
    state: &mut SelectionState,
    probe: &dyn CandidateProbe,
) -> SelectOutcome {
    let mut outcome = SelectOutcome::default();
    let limit = opts
        .stop_after
        .map_or(stream.len(), |n| stream.len().min(state.cursor + n));
    let done = |s: &SelectionState| s.selected.len() >= opts.target || s.all_full();
    while state.cursor < limit && !done(state) {
        let end = limit.min(state.cursor + opts.lookahead.max(1));
        let window = &stream[state.cursor..end];
        let snapshot: &SelectionState = state;
        let probed = batch::map(window, |c| {
            probe_candidate(c, snapshot, probe, opts.max_hops)
        });
        for p in probed {
            if done(state) {
                break;
            }
            let verdict = match p {
                Probed::Rejected(v) => v,
                Probed::Passed {
                    input_key,
                    domain,
                    resource,
                    timemap,
                } => match precheck(state, &input_key, &resource, &domain) {
                    Some(v) => v,
                    None => {
                        state.admit(
                            input_key,
                            domain,
                            Selected {
                                resource,
                                timemap: *timemap,
                            },
                        );
                        Verdict::Accepted
                    }
                },
            };
            outcome.verdicts.push(verdict);
            state.cursor += 1;
        }
    }
    outcome.exhausted = state.cursor >= stream.len();
    outcome
}

/// Absolute http(s) targets of `<a href>` in document order, without
/// repeats. Relative references are resolved against `base`.
pub fn extract_urirs_from_html(body: &[u8], base: &str) -> Vec<String> {
    let Ok(base) = Url::parse(base) else {
        return Vec::new();
    };
    let html = Html::parse_document(&String::from_utf8_lossy(body));
    let selector = Selector::parse("a[href]").expect("static selector");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in html.select(&selector) {
        let Some(href) = a.value().attr("href") else {
            continue;
        };
        let Ok(url) = base.join(href.trim()) else {
            continue;
        };
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none_or(str::is_empty) {
            continue;
        }
        let s = String::from(url);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchiveCount {
    pub urirs: usize,
    pub urims: usize,
}

/// Every TimeMap collected so far, one per URI-R, with per-archive counts.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    one_per_year: bool,
    records: Vec<TimeMapRecord>,
    index: HashMap<String, usize>,
    counts: BTreeMap<ArchiveId, ArchiveCount>,
}

impl Collection {
    pub fn new(one_per_year: bool) -> Self {
        Collection {
            one_per_year,
            ..Collection::default()
        }
    }

    pub fn from_records(
        one_per_year: bool,
        records: impl IntoIterator<Item = TimeMapRecord>,
    ) -> Self {
        let mut c = Collection::new(one_per_year);
        for r in records {
            c.add(r);
        }
        c
    }

    pub fn contains(&self, urir_key: &str) -> bool {
        self.index.contains_key(urir_key)
    }

    pub fn get(&self, urir_key: &str) -> Option<&TimeMapRecord> {
        self.index.get(urir_key).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[TimeMapRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TimeMapRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<ArchiveId, ArchiveCount> {
        &self.counts
    }

    pub fn count(&self, archive: &ArchiveId) -> ArchiveCount {
        self.counts.get(archive).copied().unwrap_or_default()
    }

    fn reduce(&self, record: TimeMapRecord) -> TimeMapRecord {
        let record = dedupe(record);
        if self.one_per_year {
            yearly_first_filter(record)
        } else {
            record
        }
    }

    fn tally(&mut self, record: &TimeMapRecord, add: bool) {
        let mut per_archive: BTreeMap<&ArchiveId, usize> = BTreeMap::new();
        for m in &record.mementos {
            *per_archive.entry(&m.archive_id).or_insert(0) += 1;
        }
        for (archive, n) in per_archive {
            let c = self.counts.entry(archive.clone()).or_default();
            if add {
                c.urirs += 1;
                c.urims += n;
            } else {
                c.urirs -= 1;
                c.urims -= n;
            }
        }
        self.counts.retain(|_, c| c.urirs > 0);
    }

    /// Adds a record, merging mementos into an existing one with the same
    /// key. Returns true when the URI-R is new.
    pub fn add(&mut self, record: TimeMapRecord) -> bool {
        match self.index.get(&record.urir_key).copied() {
            Some(i) => {
                let old = self.records[i].clone();
                self.tally(&old, false);
                let mut merged = old;
                merged.mementos.extend(record.mementos);
                let merged = self.reduce(merged);
                self.tally(&merged, true);
                self.records[i] = merged;
                false
            }
            None => {
                let record = self.reduce(record);
                self.tally(&record, true);
                self.index
                    .insert(record.urir_key.clone(), self.records.len());
                self.records.push(record);
                true
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    pub min_urirs: usize,
    /// Cap on new URI-Rs added by one call.
    pub max_new: usize,
}

/// Method 2: mine links from raw mementos of `archive` and add the
/// TimeMaps of unseen URI-Rs, until the archive reaches `min_urirs`.
pub fn method2_expand(
    client: &ArchiveClient,
    archive: &ArchiveId,
    collection: &mut Collection,
    opts: &ExpandOptions,
) -> Vec<TimeMapRecord> {
    let mut added = Vec::new();
    let satisfied = |c: &Collection, added: &Vec<TimeMapRecord>| {
        c.count(archive).urirs >= opts.min_urirs || added.len() >= opts.max_new
    };
    if satisfied(collection, &added) {
        return added;
    }
    let mut queue: VecDeque<(String, Memento)> = VecDeque::new();
    let enqueue = |queue: &mut VecDeque<(String, Memento)>, r: &TimeMapRecord| {
        for m in r.mementos.iter().filter(|m| &m.archive_id == archive) {
            queue.push_back((r.urir.clone(), m.clone()));
        }
    };
    for r in collection.records() {
        enqueue(&mut queue, r);
    }
    let mut tried: HashSet<String> = HashSet::new();
    while let Some((urir, memento)) = queue.pop_front() {
        let page = match client.fetch_raw_memento(&memento) {
            Ok(p) if p.status == 200 => p,
            Ok(p) => {
                log::info!("{} answered {}", memento.urim, p.status);
                continue;
            }
            Err(ClientError::RawAccessUnsupported(_)) => {
                log::warn!("{archive} offers no raw access; Method 2 not applicable");
                return added;
            }
            Err(e) => {
                log::info!("skipping {}: {e}", memento.urim);
                continue;
            }
        };
        let base = original_from_urim(&memento.urim).unwrap_or(urir);
        for link in extract_urirs_from_html(&page.body, &base) {
            let Ok(key) = canonical::surt(&link) else {
                continue;
            };
            if collection.contains(&key) || !tried.insert(key) {
                continue;
            }
            let record = match client.fetch_timemap_aggregator(&link) {
                Ok(r) => r,
                Err(ClientError::EmptyTimeMap(_)) => continue,
                Err(e) => {
                    log::info!("skipping {link}: {e}");
                    continue;
                }
            };
            if collection.add(record.clone()) {
                let stored = collection
                    .get(&record.urir_key)
                    .expect("just added")
                    .clone();
                enqueue(&mut queue, &stored);
                added.push(stored);
            }
            if satisfied(collection, &added) {
                return added;
            }
        }
    }
    added
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ListFormat {
    /// One URI-R per line.
    UriRsOnly,
    /// Compact two-column lines (timestamp, URI-M).
    UriRsAndUriMs,
}

/// Method 3: take URI-Rs from an archive's published list, in list order,
/// until the archive reaches `min_urirs`.
pub fn ingest_published_list(
    client: &ArchiveClient,
    archive: &ArchiveId,
    text: &str,
    format: ListFormat,
    min_urirs: usize,
    collection: &mut Collection,
) -> Vec<TimeMapRecord> {
    let mut added = Vec::new();
    if collection.count(archive).urirs >= min_urirs {
        return added;
    }
    match format {
        ListFormat::UriRsOnly => {
            for uri in parse_uri_lines(text) {
                let Ok(key) = canonical::surt(&uri) else {
                    log::warn!("skipping malformed list entry `{uri}`");
                    continue;
                };
                if collection.get(&key).is_some_and(|r| r.has_archive(archive)) {
                    continue;
                }
                let record = match client.fetch_timemap_aggregator(&uri) {
                    Ok(r) if r.has_archive(archive) => r,
                    Ok(_) | Err(ClientError::EmptyTimeMap(_)) => continue,
                    Err(e) => {
                        log::info!("skipping {uri}: {e}");
                        continue;
                    }
                };
                collection.add(record.clone());
                added.push(record);
                if collection.count(archive).urirs >= min_urirs {
                    break;
                }
            }
        }
        ListFormat::UriRsAndUriMs => {
            for record in records_from_compact_list(client.registry(), text) {
                if collection
                    .get(&record.urir_key)
                    .is_some_and(|r| r.has_archive(archive))
                {
                    continue;
                }
                collection.add(record.clone());
                added.push(record);
                if collection.count(archive).urirs >= min_urirs {
                    break;
                }
            }
        }
    }
    added
}

/// Groups compact lines by the URI-R embedded in each URI-M, in order of
/// first appearance. Unparseable lines are skipped.
pub fn records_from_compact_list(
    registry: &crate::registry::Registry,
    text: &str,
) -> Vec<TimeMapRecord> {
    let mut records: Vec<TimeMapRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let parsed = match parse_compact_lines(line) {
            Ok(mut v) if v.len() == 1 => v.pop().expect("one entry"),
            Ok(_) => continue,
            Err(e) => {
                log::warn!("line {}: {e}", n + 1);
                continue;
            }
        };
        let (datetime, urim) = parsed;
        let Some(urir) = original_from_urim(&urim) else {
            log::warn!("line {}: no URI-R inside `{urim}`", n + 1);
            continue;
        };
        let Ok(key) = canonical::surt(&urir) else {
            continue;
        };
        let slot = match index.get(&key) {
            Some(&i) => i,
            None => {
                let Ok(record) = TimeMapRecord::new(urir.clone(), Provenance::PublishedList) else {
                    continue;
                };
                index.insert(key.clone(), records.len());
                records.push(record);
                records.len() - 1
            }
        };
        match Memento::resolve(urim, datetime, key, registry) {
            Ok(m) => records[slot].mementos.push(m),
            Err(e) => log::warn!("line {}: {e}", n + 1),
        }
    }
    records.retain(|r| !r.is_empty());
    records
}

/// Method 4: ask `archive` directly for the TimeMaps of already collected
/// URI-Rs that lack its mementos, until it reaches `min_urirs`.
pub fn method4_direct(
    client: &ArchiveClient,
    archive: &ArchiveId,
    min_urirs: usize,
    collection: &mut Collection,
) -> Result<Vec<TimeMapRecord>, ClientError> {
    let mut added = Vec::new();
    let pending: Vec<(String, String)> = collection
        .records()
        .iter()
        .filter(|r| !r.has_archive(archive))
        .map(|r| (r.urir.clone(), r.urir_key.clone()))
        .collect();
    for (urir, key) in pending {
        if collection.count(archive).urirs >= min_urirs {
            break;
        }
        let mut record = match client.fetch_timemap_direct(archive, &urir) {
            Ok(r) => r,
            Err(e @ (ClientError::NoTimeMapEndpoint(_) | ClientError::UnknownArchive(_))) => {
                return Err(e)
            }
            Err(ClientError::EmptyTimeMap(_)) => continue,
            Err(e) => {
                log::info!("skipping {urir}: {e}");
                continue;
            }
        };
        record.urir = urir;
        record.urir_key = key.clone();
        for m in &mut record.mementos {
            m.urir_key = key.clone();
        }
        collection.add(record.clone());
        added.push(record);
    }
    Ok(added)
}
