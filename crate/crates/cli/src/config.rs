use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mementos::canonical::DomainKeyMode;
use mementos::client::{AggregatorEndpoint, ArchiveClient, FetchPolicy};
use mementos::discovery::ListFormat;
use mementos::fixture::FixtureStore;
use mementos::model::SelectionConstraints;
use mementos::registry::Registry;
use mementos::transport::{
    HttpTransport, HttpTransportConfig, RecordingTransport, ReplayTransport, Transport,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub registry: Option<PathBuf>,
    pub aggregator: String,
    pub fixtures: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub proxy: Option<String>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub constraints: SelectionConstraints,
    pub fetch: FetchConfig,
    pub discover: DiscoverConfig,
    pub sources: SourcesConfig,
    pub published_lists: Vec<PublishedListConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            registry: None,
            aggregator: AggregatorEndpoint::lanl().template().to_string(),
            fixtures: None,
            record: None,
            proxy: None,
            seed: 0,
            out_dir: PathBuf::from("mementos-out"),
            constraints: SelectionConstraints::default(),
            fetch: FetchConfig::default(),
            discover: DiscoverConfig::default(),
            sources: SourcesConfig::default(),
            published_lists: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchConfig {
    pub per_archive_concurrency: usize,
    pub min_request_interval_ms: u64,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for FetchConfig {
    fn default() -> Self {
        let p = FetchPolicy::default();
        FetchConfig {
            per_archive_concurrency: p.per_archive_concurrency,
            min_request_interval_ms: p.min_request_interval.as_millis() as u64,
            retries: p.retries,
            timeout_secs: p.timeout.as_secs(),
        }
    }
}

impl FetchConfig {
    pub fn policy(&self) -> FetchPolicy {
        FetchPolicy {
            per_archive_concurrency: self.per_archive_concurrency.max(1),
            min_request_interval: Duration::from_millis(self.min_request_interval_ms),
            retries: self.retries,
            timeout: Duration::from_secs(self.timeout_secs),
            ..FetchPolicy::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverConfig {
    pub quota_per_bucket: usize,
    pub domain_mode: DomainKeyMode,
    pub lookahead: usize,
    pub max_hops: usize,
    /// Cap on URI-Rs Method 2 may add per archive.
    pub method2_max_new: usize,
    /// Archives to try with Method 4; empty means every underfilled
    /// archive with a TimeMap endpoint.
    pub method4_archives: Vec<String>,
    /// Candidates between state checkpoints.
    pub checkpoint_every: usize,
}

impl Default for DiscoverConfig {
    fn default() -> Self {
        DiscoverConfig {
            quota_per_bucket: mementos::discovery::DEFAULT_QUOTA_PER_BUCKET,
            domain_mode: DomainKeyMode::Registrable,
            lookahead: 16,
            max_hops: mementos::canonical::DEFAULT_MAX_HOPS,
            method2_max_new: 10_000,
            method4_archives: Vec::new(),
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesConfig {
    pub moz: Option<PathBuf>,
    pub memento_damage: Option<PathBuf>,
    pub http_archive: Option<PathBuf>,
    pub wahr: Vec<WahrSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WahrSource {
    pub hashtag: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedListConfig {
    pub archive: String,
    pub path: PathBuf,
    pub format: ListFormat,
}

impl RunConfig {
    /// Reads `path`, resolving relative paths inside it against its
    /// directory. Referenced files must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.registry, &mut self.fixtures, &mut self.record]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
        for p in [
            &mut self.sources.moz,
            &mut self.sources.memento_damage,
            &mut self.sources.http_archive,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for w in &mut self.sources.wahr {
            fix(&mut w.path);
        }
        for l in &mut self.published_lists {
            fix(&mut l.path);
        }
    }

    fn check(&self) -> Result<()> {
        self.constraints
            .validate()
            .map_err(|e| anyhow::anyhow!("constraints: {e}"))?;
        let mut files: Vec<&Path> = Vec::new();
        files.extend(self.registry.as_deref());
        files.extend(self.fixtures.as_deref());
        files.extend(self.sources.moz.as_deref());
        files.extend(self.sources.memento_damage.as_deref());
        files.extend(self.sources.http_archive.as_deref());
        files.extend(self.sources.wahr.iter().map(|w| w.path.as_path()));
        files.extend(self.published_lists.iter().map(|l| l.path.as_path()));
        for f in files {
            if !f.exists() {
                bail!("referenced file {} does not exist", f.display());
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Result<Arc<Registry>> {
        Ok(Arc::new(match &self.registry {
            Some(path) => Registry::load(path)
                .with_context(|| format!("loading registry {}", path.display()))?,
            None => Registry::builtin(),
        }))
    }

    pub fn client(&self) -> Result<ArchiveClient> {
        let transport = make_transport(
            self.fixtures.as_deref(),
            self.record.as_deref(),
            self.proxy.as_deref(),
            Duration::from_secs(self.fetch.timeout_secs),
        )?;
        let mut policy = self.fetch.policy();
        if self.fixtures.is_some() {
            policy.min_request_interval = Duration::ZERO;
        }
        Ok(ArchiveClient::new(transport, self.registry()?, policy)
            .with_aggregator(AggregatorEndpoint::new(self.aggregator.clone())?))
    }
}

pub fn make_transport(
    fixtures: Option<&Path>,
    record: Option<&Path>,
    proxy: Option<&str>,
    timeout: Duration,
) -> Result<Arc<dyn Transport>> {
    if let Some(dir) = fixtures {
        let store = FixtureStore::load_dir(dir)
            .with_context(|| format!("loading fixtures from {}", dir.display()))?;
        return Ok(Arc::new(ReplayTransport::new(Arc::new(store))));
    }
    let http = HttpTransport::new(&HttpTransportConfig {
        timeout,
        proxy: proxy.map(str::to_string),
        ..HttpTransportConfig::default()
    })?;
    Ok(match record {
        Some(dir) => Arc::new(RecordingTransport::new(http, dir)?),
        None => Arc::new(http),
    })
}
