//! The set of archives the pipeline knows about, and host-based attribution
//! of URI-Ms to them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

/// Short key naming an archive, e.g. `perma.cc`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchiveId(String);

impl ArchiveId {
    pub fn new(id: impl Into<String>) -> Self {
        ArchiveId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArchiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArchiveId {
    fn from(s: &str) -> Self {
        ArchiveId(s.to_string())
    }
}

impl PartialEq<str> for ArchiveId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for ArchiveId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    General,
    OnDemand,
    National,
    Organizational,
}

/// How an archive exposes unaltered (raw) memento content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawScheme {
    /// `id_` appended to the 14-digit timestamp path segment.
    WaybackIdSuffix,
    None,
}

impl RawScheme {
    /// Rewrites a URI-M into its raw-access form. `None` when the archive has
    /// no raw access or the URI-M carries no 14-digit timestamp segment.
    pub fn raw_urim(self, urim: &str) -> Option<String> {
        match self {
            RawScheme::None => None,
            RawScheme::WaybackIdSuffix => wayback_raw_urim(urim),
        }
    }
}

fn wayback_raw_urim(urim: &str) -> Option<String> {
    let path_start = urim.find("://").map(|i| i + 3)?;
    let path_start = path_start + urim[path_start..].find('/')?;
    let mut offset = path_start;
    // Walk the segments of the archive's own path; the embedded original URI
    // begins right after the timestamp segment.
    while offset < urim.len() {
        let seg_start = offset + 1;
        let seg_end = urim[seg_start..]
            .find('/')
            .map_or(urim.len(), |i| seg_start + i);
        let segment = &urim[seg_start..seg_end];
        if segment.len() >= 14 && segment.as_bytes()[..14].iter().all(u8::is_ascii_digit) {
            let modifier = &segment[14..];
            if !modifier.is_empty() && !modifier.ends_with('_') {
                return None;
            }
            let mut raw = String::with_capacity(urim.len() + 3);
            raw.push_str(&urim[..seg_start + 14]);
            raw.push_str("id_");
            raw.push_str(&urim[seg_end..]);
            return Some(raw);
        }
        if segment.contains(':') {
            // Reached the embedded URI without seeing a timestamp.
            return None;
        }
        offset = seg_end;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveDescriptor {
    pub id: ArchiveId,
    pub name: String,
    pub domains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unverified_domains: Vec<String>,
    pub purpose: Purpose,
    pub memento_native: bool,
    pub raw_scheme: RawScheme,
    /// TimeMap URI template with a `{urir}` placeholder, for direct requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timemap_template: Option<String>,
}

impl ArchiveDescriptor {
    pub fn patterns(&self) -> impl Iterator<Item = &str> {
        self.domains
            .iter()
            .chain(self.unverified_domains.iter())
            .map(String::as_str)
    }

    pub fn matches_host(&self, host: &str) -> bool {
        self.patterns().any(|p| host_matches(host, p))
    }

    pub fn timemap_uri(&self, urir: &str) -> Option<String> {
        self.timemap_template
            .as_ref()
            .map(|t| t.replace("{urir}", urir))
    }
}

fn host_matches(host: &str, pattern: &str) -> bool {
    host == pattern
        || (host.len() > pattern.len()
            && host.ends_with(pattern)
            && host.as_bytes()[host.len() - pattern.len() - 1] == b'.')
}

fn patterns_overlap(a: &str, b: &str) -> bool {
    host_matches(a, b) || host_matches(b, a)
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("no archive in the registry serves `{0}`")]
    UnknownArchive(String),
    #[error("`{0}` is not an absolute URI")]
    BadUri(String),
    #[error("registry is empty")]
    Empty,
    #[error("archive `{0}` lists no domains")]
    NoDomains(ArchiveId),
    #[error("duplicate archive id `{0}`")]
    DuplicateId(ArchiveId),
    #[error("domain pattern `{pattern}` of `{first}` overlaps `{other}` of `{second}`")]
    Overlap {
        first: ArchiveId,
        pattern: String,
        second: ArchiveId,
        other: String,
    },
    #[error("timemap template of `{0}` has no {{urir}} placeholder")]
    BadTemplate(ArchiveId),
    #[error("cannot read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse registry: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize registry: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    archive: Vec<ArchiveDescriptor>,
}

/// An ordered, validated collection of archive descriptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    archives: Vec<ArchiveDescriptor>,
}

const BUILTIN: &str = include_str!("../data/archives.toml");

impl Registry {
    pub fn new(archives: Vec<ArchiveDescriptor>) -> Result<Self, RegistryError> {
        if archives.is_empty() {
            return Err(RegistryError::Empty);
        }
        for (i, a) in archives.iter().enumerate() {
            if a.domains.is_empty() {
                return Err(RegistryError::NoDomains(a.id.clone()));
            }
            if let Some(t) = &a.timemap_template {
                if !t.contains("{urir}") {
                    return Err(RegistryError::BadTemplate(a.id.clone()));
                }
            }
            for b in &archives[..i] {
                if a.id == b.id {
                    return Err(RegistryError::DuplicateId(a.id.clone()));
                }
                for pa in a.patterns() {
                    if let Some(pb) = b.patterns().find(|pb| patterns_overlap(pa, pb)) {
                        return Err(RegistryError::Overlap {
                            first: b.id.clone(),
                            pattern: pb.to_string(),
                            second: a.id.clone(),
                            other: pa.to_string(),
                        });
                    }
                }
            }
        }
        Ok(Registry { archives })
    }

    /// The seventeen public archives shipped with the crate.
    pub fn builtin() -> Self {
        Registry::from_toml(BUILTIN).expect("bundled registry is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;
        Registry::new(file.archive)
    }

    pub fn to_toml(&self) -> Result<String, RegistryError> {
        Ok(toml::to_string(&RegistryFile {
            archive: self.archives.clone(),
        })?)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Registry::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn archives(&self) -> &[ArchiveDescriptor] {
        &self.archives
    }

    pub fn len(&self) -> usize {
        self.archives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archives.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ArchiveDescriptor> {
        self.archives.iter().find(|a| a.id.as_str() == id)
    }

    pub fn by_host(&self, host: &str) -> Option<&ArchiveDescriptor> {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        self.archives.iter().find(|a| a.matches_host(&host))
    }

    /// The archive serving `urim`, matched on its host.
    pub fn archive_of(&self, urim: &str) -> Result<&ArchiveDescriptor, RegistryError> {
        let url = Url::parse(urim).map_err(|_| RegistryError::BadUri(urim.to_string()))?;
        let host = url
            .host_str()
            .ok_or_else(|| RegistryError::BadUri(urim.to_string()))?;
        self.by_host(host)
            .ok_or_else(|| RegistryError::UnknownArchive(urim.to_string()))
    }
}
