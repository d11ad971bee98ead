//! Domain vocabulary shared by the pipeline stages.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::canonical::{self, CanonError};
use crate::registry::{ArchiveId, Registry, RegistryError};

/// Where a URI-R was first seen.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTag {
    Moz,
    MementoDamage,
    HttpArchive,
    /// Web Archives for Historical Research tweets, keyed by hashtag.
    Wahr(String),
    /// URI-Rs found in the HTML of an already collected memento.
    Extracted,
    /// URI-Rs taken from an archive's published list.
    PublishedList,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::Moz => f.write_str("moz"),
            SourceTag::MementoDamage => f.write_str("memento-damage"),
            SourceTag::HttpArchive => f.write_str("http-archive"),
            SourceTag::Wahr(tag) => write!(f, "wahr:{tag}"),
            SourceTag::Extracted => f.write_str("extracted"),
            SourceTag::PublishedList => f.write_str("published-list"),
        }
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moz" => Ok(SourceTag::Moz),
            "memento-damage" => Ok(SourceTag::MementoDamage),
            "http-archive" => Ok(SourceTag::HttpArchive),
            "extracted" => Ok(SourceTag::Extracted),
            "published-list" => Ok(SourceTag::PublishedList),
            other => match other.strip_prefix("wahr:") {
                Some(tag) if !tag.is_empty() => Ok(SourceTag::Wahr(tag.to_string())),
                _ => Err(format!("unknown source tag `{other}`")),
            },
        }
    }
}

/// Number of nonempty path segments, with four or more collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathBucket {
    S0,
    S1,
    S2,
    S3,
    S4Plus,
}

impl PathBucket {
    pub const ALL: [PathBucket; 5] = [
        PathBucket::S0,
        PathBucket::S1,
        PathBucket::S2,
        PathBucket::S3,
        PathBucket::S4Plus,
    ];

    pub fn from_segments(count: usize) -> Self {
        match count {
            0 => PathBucket::S0,
            1 => PathBucket::S1,
            2 => PathBucket::S2,
            3 => PathBucket::S3,
            _ => PathBucket::S4Plus,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PathBucket::S0 => "s0",
            PathBucket::S1 => "s1",
            PathBucket::S2 => "s2",
            PathBucket::S3 => "s3",
            PathBucket::S4Plus => "s4+",
        }
    }
}

impl fmt::Display for PathBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PathBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s0" => Ok(PathBucket::S0),
            "s1" => Ok(PathBucket::S1),
            "s2" => Ok(PathBucket::S2),
            "s3" => Ok(PathBucket::S3),
            "s4+" | "s4plus" => Ok(PathBucket::S4Plus),
            other => Err(format!("unknown path bucket `{other}`")),
        }
    }
}

/// A live-web resource (URI-R) admitted to the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalResource {
    pub uri: String,
    /// SURT of `final_uri`.
    pub canonical_key: String,
    pub final_uri: String,
    pub source: SourceTag,
    pub path_bucket: PathBucket,
    pub live_status: Option<u16>,
}

impl OriginalResource {
    pub fn new(
        uri: impl Into<String>,
        final_uri: impl Into<String>,
        source: SourceTag,
        live_status: Option<u16>,
    ) -> Result<Self, CanonError> {
        let final_uri = final_uri.into();
        Ok(OriginalResource {
            uri: uri.into(),
            canonical_key: canonical::surt(&final_uri)?,
            path_bucket: canonical::path_length(&final_uri)?,
            final_uri,
            source,
            live_status,
        })
    }
}

/// An archived snapshot (URI-M) of a URI-R.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Memento {
    pub urim: String,
    pub archive_id: ArchiveId,
    pub memento_datetime: DateTime<Utc>,
    pub urir_key: String,
    /// URI-M for unaltered content, when the archive offers raw access.
    pub raw_urim: Option<String>,
}

impl Memento {
    /// Attributes `urim` to its archive and derives the raw-access form.
    pub fn resolve(
        urim: impl Into<String>,
        memento_datetime: DateTime<Utc>,
        urir_key: impl Into<String>,
        registry: &Registry,
    ) -> Result<Self, RegistryError> {
        let urim = urim.into();
        let archive = registry.archive_of(&urim)?;
        Ok(Memento {
            raw_urim: archive.raw_scheme.raw_urim(&urim),
            archive_id: archive.id.clone(),
            urim,
            memento_datetime,
            urir_key: urir_key.into(),
        })
    }

    pub fn year(&self) -> i32 {
        self.memento_datetime.year()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Aggregator,
    DirectArchive,
    PublishedList,
}

/// The mementos known for one URI-R.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeMapRecord {
    pub urir: String,
    pub urir_key: String,
    pub mementos: Vec<Memento>,
    pub fetched_at: DateTime<Utc>,
    pub provenance: Provenance,
}

impl TimeMapRecord {
    pub fn new(urir: impl Into<String>, provenance: Provenance) -> Result<Self, CanonError> {
        let urir = urir.into();
        Ok(TimeMapRecord {
            urir_key: canonical::surt(&urir)?,
            urir,
            mementos: Vec::new(),
            fetched_at: Utc::now(),
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.mementos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mementos.is_empty()
    }

    pub fn has_archive(&self, archive: &ArchiveId) -> bool {
        self.mementos.iter().any(|m| &m.archive_id == archive)
    }
}

/// Governs how many URI-Rs/URI-Ms the sampler aims for per archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConstraints {
    pub min_urirs_per_archive: usize,
    pub max_urims_per_archive: usize,
    #[serde(with = "duration_secs")]
    pub download_budget: Duration,
    pub one_per_year: bool,
}

impl Default for SelectionConstraints {
    fn default() -> Self {
        SelectionConstraints {
            min_urirs_per_archive: 200,
            max_urims_per_archive: 1_600,
            download_budget: Duration::from_secs(40 * 3600),
            one_per_year: true,
        }
    }
}

impl SelectionConstraints {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_urirs_per_archive == 0 {
            return Err("min_urirs_per_archive must be positive".into());
        }
        if self.max_urims_per_archive == 0 {
            return Err("max_urims_per_archive must be positive".into());
        }
        if self.download_budget.is_zero() {
            return Err("download_budget must be positive".into());
        }
        Ok(())
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Formats a datetime as the 14-digit `YYYYMMDDhhmmss` timestamp.
pub fn format_timestamp14(dt: &DateTime<Utc>) -> String {
    dt.format("%Y%m%d%H%M%S").to_string()
}

/// Parses a 14-digit `YYYYMMDDhhmmss` timestamp as UTC.
pub fn parse_timestamp14(s: &str) -> Option<DateTime<Utc>> {
    if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NaiveDateTime::parse_from_str(s, "%Y%m%d%H%M%S")
        .ok()
        .map(|naive| Utc.from_utc_datetime(&naive))
}
