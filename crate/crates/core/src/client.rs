//! Polite retrieval from archives and aggregators.
//!
//! Every request goes through a lane keyed by archive (or by host for the
//! live web). A lane admits at most `per_archive_concurrency` requests at a
//! time and spaces request starts by `min_request_interval`, measured from
//! both the previous start and the previous completion.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::Rng;
use thiserror::Error;
use url::Url;

use crate::canonical::{self, RedirectChain, RedirectError, DEFAULT_MAX_HOPS};
use crate::http::{
    classify_response, format_http_date, HttpRequest, HttpResponse, ResponseClass, ACCEPT_DATETIME,
    MEMENTO_DATETIME,
};
use crate::linkformat::{LinkFormatError, TimeMapDocument, TimeMapParser};
use crate::model::{Memento, Provenance, TimeMapRecord};
use crate::registry::{ArchiveId, Registry};
use crate::transport::{Transport, TransportError};

pub const AGGREGATOR_LANE: &str = "aggregator";

#[derive(Debug, Clone, PartialEq)]
pub struct FetchPolicy {
    pub per_archive_concurrency: usize,
    pub min_request_interval: Duration,
    /// Extra attempts after the first.
    pub retries: u32,
    pub timeout: Duration,
    pub backoff_base: Duration,
    /// Upper bound on any single wait, including `Retry-After`.
    pub backoff_cap: Duration,
    pub max_timemap_pages: usize,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            per_archive_concurrency: 1,
            min_request_interval: Duration::from_secs(1),
            retries: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(60),
            max_timemap_pages: 1_000,
        }
    }
}

impl FetchPolicy {
    /// No spacing and no retry waits; for fixture replays.
    pub fn immediate() -> Self {
        FetchPolicy {
            min_request_interval: Duration::ZERO,
            backoff_base: Duration::ZERO,
            backoff_cap: Duration::ZERO,
            ..FetchPolicy::default()
        }
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let wait = match retry_after {
            Some(d) => d,
            None => {
                let exp = self.backoff_base.saturating_mul(1u32 << attempt.min(16));
                let jitter = if exp.is_zero() {
                    Duration::ZERO
                } else {
                    exp.mul_f64(rand::thread_rng().gen_range(0.0..0.5))
                };
                exp + jitter
            }
        };
        wait.min(self.backoff_cap)
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network error fetching `{uri}`: {source}")]
    Network {
        uri: String,
        #[source]
        source: TransportError,
    },
    #[error("`{uri}` answered HTTP {status}")]
    Status { uri: String, status: u16 },
    #[error(transparent)]
    Parse(#[from] LinkFormatError),
    #[error("no mementos for `{0}`")]
    EmptyTimeMap(String),
    #[error("archive `{0}` has no TimeMap endpoint")]
    NoTimeMapEndpoint(ArchiveId),
    #[error("archive `{0}` offers no raw access")]
    RawAccessUnsupported(ArchiveId),
    #[error("unknown archive `{0}`")]
    UnknownArchive(String),
    #[error(transparent)]
    Redirect(#[from] RedirectError),
    #[error("bad aggregator template `{0}`: missing {{urir}}")]
    BadTemplate(String),
}

/// URI template of a TimeMap aggregator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorEndpoint {
    template: String,
}

impl AggregatorEndpoint {
    pub fn new(template: impl Into<String>) -> Result<Self, ClientError> {
        let template = template.into();
        if !template.contains("{urir}") {
            return Err(ClientError::BadTemplate(template));
        }
        Ok(AggregatorEndpoint { template })
    }

    pub fn lanl() -> Self {
        AggregatorEndpoint {
            template: "http://timetravel.mementoweb.org/timemap/link/{urir}".into(),
        }
    }

    /// A MemGator instance on its default port.
    pub fn memgator() -> Self {
        AggregatorEndpoint {
            template: "http://localhost:1208/timemap/link/{urir}".into(),
        }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn uri(&self, urir: &str) -> String {
        self.template.replace("{urir}", urir)
    }
}

impl Default for AggregatorEndpoint {
    fn default() -> Self {
        AggregatorEndpoint::lanl()
    }
}

#[derive(Debug, Default)]
struct LaneState {
    in_flight: usize,
    last_start: Option<Instant>,
    last_end: Option<Instant>,
}

#[derive(Debug, Default)]
struct LaneGate {
    state: Mutex<LaneState>,
    cond: Condvar,
}

impl LaneGate {
    fn acquire(&self, concurrency: usize, interval: Duration) {
        let mut state = self.state.lock().unwrap();
        loop {
            if state.in_flight < concurrency {
                let earliest = [state.last_start, state.last_end]
                    .into_iter()
                    .flatten()
                    .max()
                    .map(|t| t + interval);
                let now = Instant::now();
                match earliest {
                    Some(at) if at > now => {
                        state = self.cond.wait_timeout(state, at - now).unwrap().0;
                    }
                    _ => {
                        state.in_flight += 1;
                        state.last_start = Some(now);
                        return;
                    }
                }
            } else {
                state = self.cond.wait(state).unwrap();
            }
        }
    }

    fn release(&self) {
        let mut state = self.state.lock().unwrap();
        state.in_flight -= 1;
        state.last_end = Some(Instant::now());
        drop(state);
        self.cond.notify_all();
    }
}

struct Permit<'a>(&'a LaneGate);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.release();
    }
}

/// A raw memento download.
#[derive(Debug, Clone)]
pub struct RawFetch {
    pub uri: String,
    pub status: u16,
    pub headers: crate::http::Headers,
    pub body: Vec<u8>,
    pub class: ResponseClass,
    pub elapsed: Duration,
}

pub struct ArchiveClient {
    transport: Arc<dyn Transport>,
    registry: Arc<Registry>,
    policy: FetchPolicy,
    aggregator: AggregatorEndpoint,
    lanes: Mutex<HashMap<String, Arc<LaneGate>>>,
}

impl ArchiveClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        registry: Arc<Registry>,
        policy: FetchPolicy,
    ) -> Self {
        ArchiveClient {
            transport,
            registry,
            policy,
            aggregator: AggregatorEndpoint::default(),
            lanes: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_aggregator(mut self, aggregator: AggregatorEndpoint) -> Self {
        self.aggregator = aggregator;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn aggregator(&self) -> &AggregatorEndpoint {
        &self.aggregator
    }

    /// Lane key for a request URI: the owning archive, else the host.
    pub fn lane_of(&self, uri: &str) -> String {
        if let Ok(archive) = self.registry.archive_of(uri) {
            return archive.id.to_string();
        }
        Url::parse(uri)
            .ok()
            .and_then(|u| u.host_str().map(str::to_ascii_lowercase))
            .unwrap_or_else(|| uri.to_string())
    }

    fn gate(&self, lane: &str) -> Arc<LaneGate> {
        self.lanes
            .lock()
            .unwrap()
            .entry(lane.to_string())
            .or_default()
            .clone()
    }

    /// Sends through `lane`, retrying transport failures and 429/503
    /// answers that did not come from the archive's holdings.
    pub fn send(&self, lane: &str, request: &HttpRequest) -> Result<HttpResponse, ClientError> {
        let gate = self.gate(lane);
        let mut attempt = 0;
        loop {
            let result = {
                gate.acquire(
                    self.policy.per_archive_concurrency.max(1),
                    self.policy.min_request_interval,
                );
                let _permit = Permit(&gate);
                self.transport.send(request)
            };
            let retry_after = match &result {
                Ok(r) if matches!(r.status, 429 | 503) && !r.headers.contains(MEMENTO_DATETIME) => {
                    Some(r.headers.get("Retry-After").and_then(parse_retry_after))
                }
                Ok(_) => None,
                Err(TransportError::Io(_) | TransportError::Timeout(_)) => Some(None),
                Err(_) => None,
            };
            match retry_after {
                Some(wait) if attempt < self.policy.retries => {
                    let delay = self.policy.backoff(attempt, wait);
                    log::debug!("retrying {} in {delay:?}", request.uri);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                _ => {
                    return result.map_err(|source| ClientError::Network {
                        uri: request.uri.clone(),
                        source,
                    })
                }
            }
        }
    }

    /// Fetches the aggregated TimeMap of `urir`, following further pages.
    pub fn fetch_timemap_aggregator(&self, urir: &str) -> Result<TimeMapRecord, ClientError> {
        let first = self.aggregator.uri(urir);
        let parser = TimeMapParser::new(&self.registry).provenance(Provenance::Aggregator);
        self.fetch_paged(AGGREGATOR_LANE, &first, urir, &parser)
    }

    /// Fetches a TimeMap straight from one archive; every memento in the
    /// result belongs to that archive.
    pub fn fetch_timemap_direct(
        &self,
        archive: &ArchiveId,
        urir: &str,
    ) -> Result<TimeMapRecord, ClientError> {
        let descriptor = self
            .registry
            .get(archive.as_str())
            .ok_or_else(|| ClientError::UnknownArchive(archive.to_string()))?;
        let uri = match descriptor.timemap_uri(urir) {
            Some(uri) if descriptor.memento_native => uri,
            _ => return Err(ClientError::NoTimeMapEndpoint(archive.clone())),
        };
        let parser = TimeMapParser::new(&self.registry)
            .provenance(Provenance::DirectArchive)
            .only_archive(archive.clone());
        self.fetch_paged(archive.as_str(), &uri, urir, &parser)
    }

    fn fetch_paged(
        &self,
        lane: &str,
        first: &str,
        urir: &str,
        parser: &TimeMapParser<'_>,
    ) -> Result<TimeMapRecord, ClientError> {
        let fetched_at = Utc::now();
        let parser = parser.clone().fetched_at(fetched_at);
        let mut queue = VecDeque::from([first.to_string()]);
        let mut visited: HashSet<String> = HashSet::new();
        let mut merged: Option<TimeMapRecord> = None;
        while let Some(page) = queue.pop_front() {
            if !visited.insert(page.clone()) || visited.len() > self.policy.max_timemap_pages {
                continue;
            }
            let response = self.send(lane, &HttpRequest::get(&page))?;
            match response.status {
                200 => {}
                404 if merged.is_none() => return Err(ClientError::EmptyTimeMap(urir.to_string())),
                404 => continue,
                status => return Err(ClientError::Status { uri: page, status }),
            }
            let doc = TimeMapDocument::parse(&response.body, parser.parse_mode())?;
            for next in doc.timemap_links() {
                let next = Url::parse(&page)
                    .and_then(|base| base.join(next))
                    .map(String::from)
                    .unwrap_or_else(|_| next.to_string());
                if !visited.contains(&next) {
                    queue.push_back(next);
                }
            }
            let record = parser.record_from(&doc, Some(urir))?;
            match &mut merged {
                None => merged = Some(record),
                Some(m) => m.mementos.extend(record.mementos),
            }
        }
        let record = merged.ok_or_else(|| ClientError::EmptyTimeMap(urir.to_string()))?;
        if record.is_empty() {
            return Err(ClientError::EmptyTimeMap(urir.to_string()));
        }
        Ok(record)
    }

    /// GETs the raw form of `memento`, following redirects within the
    /// archive's lane. Archival error bodies are returned, not raised.
    pub fn fetch_raw_memento(&self, memento: &Memento) -> Result<RawFetch, ClientError> {
        let raw = memento
            .raw_urim
            .clone()
            .ok_or_else(|| ClientError::RawAccessUnsupported(memento.archive_id.clone()))?;
        let lane = memento.archive_id.as_str();
        let started = Instant::now();
        let mut uri = raw;
        let mut seen = HashSet::new();
        let response = loop {
            seen.insert(uri.clone());
            let response = self.send(lane, &HttpRequest::get(&uri))?;
            let next = response
                .is_redirect()
                .then(|| response.headers.get("Location"))
                .flatten()
                .and_then(|loc| Url::parse(&uri).ok()?.join(loc).ok())
                .map(String::from);
            match next {
                Some(next) if seen.len() <= DEFAULT_MAX_HOPS && !seen.contains(&next) => uri = next,
                _ => break response,
            }
        };
        Ok(RawFetch {
            class: classify_response(response.status, &response.headers),
            status: response.status,
            headers: response.headers,
            body: response.body,
            elapsed: started.elapsed(),
            uri,
        })
    }

    pub fn timed_download(&self, memento: &Memento) -> Result<(Vec<u8>, Duration), ClientError> {
        self.fetch_raw_memento(memento).map(|f| (f.body, f.elapsed))
    }

    /// Plain TimeGate request with `Accept-Datetime`; no negotiation logic.
    pub fn timegate(
        &self,
        urig: &str,
        accept_datetime: &DateTime<Utc>,
    ) -> Result<HttpResponse, ClientError> {
        let request =
            HttpRequest::get(urig).header(ACCEPT_DATETIME, format_http_date(accept_datetime));
        self.send(&self.lane_of(urig), &request)
    }

    pub fn resolve_redirects(
        &self,
        uri: &str,
        max_hops: usize,
    ) -> Result<RedirectChain, ClientError> {
        Ok(canonical::resolve_redirects(self, uri, max_hops)?)
    }

    /// Runs `jobs` with one thread per lane (times the per-lane
    /// concurrency). Results come back in job order.
    pub fn run_lanes<J, R, F>(&self, jobs: Vec<(String, J)>, work: F) -> Vec<R>
    where
        J: Send,
        R: Send,
        F: Fn(&ArchiveClient, J) -> R + Sync,
    {
        let total = jobs.len();
        let mut by_lane: Vec<(String, VecDeque<(usize, J)>)> = Vec::new();
        let mut lane_index: HashMap<String, usize> = HashMap::new();
        for (i, (lane, job)) in jobs.into_iter().enumerate() {
            let slot = *lane_index.entry(lane.clone()).or_insert_with(|| {
                by_lane.push((lane, VecDeque::new()));
                by_lane.len() - 1
            });
            by_lane[slot].1.push_back((i, job));
        }
        let (tx, rx) = mpsc::channel::<(usize, R)>();
        let workers = self.policy.per_archive_concurrency.max(1);
        std::thread::scope(|scope| {
            for (_, queue) in by_lane {
                let queue = Arc::new(Mutex::new(queue));
                for _ in 0..workers {
                    let queue = Arc::clone(&queue);
                    let tx = tx.clone();
                    let work = &work;
                    scope.spawn(move || loop {
                        let next = queue.lock().unwrap().pop_front();
                        let Some((i, job)) = next else { break };
                        if tx.send((i, work(self, job))).is_err() {
                            break;
                        }
                    });
                }
            }
            drop(tx);
        });
        let mut out: Vec<Option<R>> = (0..total).map(|_| None).collect();
        for (i, r) in rx {
            out[i] = Some(r);
        }
        out.into_iter()
            .map(|r| r.expect("every job reports"))
            .collect()
    }
}

impl Transport for ArchiveClient {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        ArchiveClient::send(self, &self.lane_of(&request.uri), request).map_err(|e| match e {
            ClientError::Network { source, .. } => source,
            other => TransportError::Io(other.to_string()),
        })
    }
}

fn parse_retry_after(value: &str) -> Option<Duration> {
    let value = value.trim();
    if let Ok(secs) = value.parse::<u64>() {
        return Some(Duration::from_secs(secs));
    }
    let at = crate::http::parse_http_date(value)?;
    Some((at - Utc::now()).to_std().unwrap_or(Duration::ZERO))
}
