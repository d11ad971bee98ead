//! URI-R identity: SURT canonicalization, redirect resolution and
//! path-length bucketing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::{Host, Url};

use crate::http::{HttpRequest, Method};
use crate::model::PathBucket;
use crate::transport::{Transport, TransportError};

pub const DEFAULT_MAX_HOPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("malformed URI `{0}`")]
    MalformedUri(String),
}

/// Parses a web URI, assuming `http://` when no scheme is given. Only
/// http(s) URIs with a nonempty host are accepted.
pub fn parse_web_uri(input: &str) -> Result<Url, CanonError> {
    let trimmed = input.trim();
    let malformed = || CanonError::MalformedUri(input.to_string());
    if trimmed.is_empty() {
        return Err(malformed());
    }
    let url = if trimmed.contains("://") {
        Url::parse(trimmed)
    } else if has_foreign_scheme(trimmed) {
        return Err(malformed());
    } else {
        Url::parse(&format!("http://{trimmed}"))
    }
    .map_err(|_| malformed())?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(malformed());
    }
    match url.host() {
        Some(Host::Domain(d)) if !d.trim_end_matches('.').is_empty() => Ok(url),
        Some(Host::Ipv4(_)) | Some(Host::Ipv6(_)) => Ok(url),
        _ => Err(malformed()),
    }
}

// `mailto:x`, `javascript:y`; a colon followed by a digit is a port.
fn has_foreign_scheme(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let scheme_like = scheme
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "+.-".contains(c));
    scheme_like && !rest.starts_with(|c: char| c.is_ascii_digit())
}

/// Normalized string form of a web URI, as used for request keys.
pub fn normalize(input: &str) -> Result<String, CanonError> {
    parse_web_uri(input).map(String::from)
}

fn is_www_label(label: &str) -> bool {
    label
        .strip_prefix("www")
        .is_some_and(|rest| rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Host labels after lowercasing and dropping leading `www`/`wwwN` labels.
/// At least two labels always remain.
fn canonical_labels(host: &str) -> Vec<&str> {
    let mut labels: Vec<&str> = host.trim_end_matches('.').split('.').collect();
    while labels.len() > 2 && is_www_label(labels[0]) {
        labels.remove(0);
    }
    labels
}

/// Canonical host used for full-host domain comparisons.
pub fn canonical_host(url: &Url) -> String {
    match url.host() {
        Some(Host::Domain(d)) => canonical_labels(d).join("."),
        Some(other) => other.to_string(),
        None => String::new(),
    }
}

/// Sort-friendly URI Reordering Transform.
///
/// `http://www.Example.com:80/a?b#c` becomes `com,example)/a?b`. The scheme,
/// default ports, userinfo and fragment are dropped; the path and query are
/// kept verbatim.
pub fn surt(uri: &str) -> Result<String, CanonError> {
    let url = parse_web_uri(uri)?;
    Ok(surt_url(&url))
}

pub fn surt_url(url: &Url) -> String {
    let mut out = String::with_capacity(url.as_str().len());
    match url.host() {
        Some(Host::Domain(d)) => {
            let labels = canonical_labels(d);
            for (i, label) in labels.iter().rev().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(label);
            }
        }
        Some(other) => out.push_str(&other.to_string()),
        None => {}
    }
    if let Some(port) = url.port() {
        out.push(':');
        out.push_str(&port.to_string());
    }
    out.push(')');
    out.push_str(url.path());
    if let Some(q) = url.query().filter(|q| !q.is_empty()) {
        out.push('?');
        out.push_str(q);
    }
    out
}

/// Rebuilds an `http://` URI from a SURT key.
pub fn surt_to_uri(key: &str) -> Option<String> {
    let close = key.find(')')?;
    let (authority, rest) = (&key[..close], &key[close + 1..]);
    let (host_part, port) = if authority.starts_with('[') {
        match authority.rfind("]:") {
            Some(i) => (&authority[..=i], Some(&authority[i + 2..])),
            None => (authority, None),
        }
    } else {
        match authority.rfind(':') {
            Some(i) => (&authority[..i], Some(&authority[i + 1..])),
            None => (authority, None),
        }
    };
    let host = if host_part.contains(',') {
        host_part.split(',').rev().collect::<Vec<_>>().join(".")
    } else {
        host_part.to_string()
    };
    let mut uri = format!("http://{host}");
    if let Some(p) = port {
        uri.push(':');
        uri.push_str(p);
    }
    uri.push_str(rest);
    Some(uri)
}

/// Buckets a URI by its number of nonempty path segments.
pub fn path_length(uri: &str) -> Result<PathBucket, CanonError> {
    let url = parse_web_uri(uri)?;
    Ok(path_bucket_of(&url))
}

pub fn path_bucket_of(url: &Url) -> PathBucket {
    PathBucket::from_segments(url.path().split('/').filter(|s| !s.is_empty()).count())
}

/// What "same domain name" means when enforcing one URI-R per domain and
/// path-length bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKeyMode {
    /// Host minus its public suffix plus one label (`youtube.com`).
    #[default]
    Registrable,
    /// The canonical host with `www` stripped.
    FullHost,
}

pub fn domain_key(uri: &str, mode: DomainKeyMode) -> Result<String, CanonError> {
    let url = parse_web_uri(uri)?;
    let host = canonical_host(&url);
    Ok(match (mode, url.host()) {
        (DomainKeyMode::Registrable, Some(Host::Domain(_))) => {
            psl::domain_str(&host).map(str::to_string).unwrap_or(host)
        }
        _ => host,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub uri: String,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedirectChain {
    pub hops: Vec<Hop>,
    pub final_uri: String,
    pub terminal_status: u16,
}

#[derive(Debug, Error)]
pub enum RedirectError {
    #[error(transparent)]
    Malformed(#[from] CanonError),
    #[error("network error resolving `{uri}`: {source}")]
    Network {
        uri: String,
        #[source]
        source: TransportError,
    },
    #[error("redirect loop back to `{repeated}`")]
    RedirectLoop { repeated: String, hops: Vec<Hop> },
    #[error("more than {max_hops} redirects starting at `{start}`")]
    HopLimitExceeded {
        start: String,
        max_hops: usize,
        hops: Vec<Hop>,
    },
}

/// Follows `Location` headers from `uri`, issuing HEAD requests and falling
/// back to GET when a server rejects HEAD with 405 or 501. At most
/// `max_hops` redirects are followed.
pub fn resolve_redirects(
    transport: &dyn Transport,
    uri: &str,
    max_hops: usize,
) -> Result<RedirectChain, RedirectError> {
    let start = normalize(uri)?;
    let mut current = start.clone();
    let mut hops: Vec<Hop> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(current.clone());

    loop {
        let response = probe(transport, &current)?;
        hops.push(Hop {
            uri: current.clone(),
            status: response.status,
        });
        let location = match response.headers.get("Location") {
            Some(loc) if (300..400).contains(&response.status) => loc.trim().to_string(),
            _ => {
                return Ok(RedirectChain {
                    final_uri: current,
                    terminal_status: response.status,
                    hops,
                })
            }
        };
        if hops.len() > max_hops {
            return Err(RedirectError::HopLimitExceeded {
                start,
                max_hops,
                hops,
            });
        }
        let base = Url::parse(&current).map_err(|_| CanonError::MalformedUri(current.clone()))?;
        let next = base
            .join(&location)
            .map_err(|_| CanonError::MalformedUri(location.clone()))?;
        let next = normalize(next.as_str())?;
        if !seen.insert(next.clone()) {
            return Err(RedirectError::RedirectLoop {
                repeated: next,
                hops,
            });
        }
        current = next;
    }
}

fn probe(transport: &dyn Transport, uri: &str) -> Result<crate::http::HttpResponse, RedirectError> {
    let network = |source| RedirectError::Network {
        uri: uri.to_string(),
        source,
    };
    let head = transport.send(&HttpRequest::head(uri)).map_err(network)?;
    if matches!(head.status, 405 | 501) {
        let mut get = transport
            .send(&HttpRequest {
                method: Method::Get,
                ..HttpRequest::head(uri)
            })
            .map_err(network)?;
        get.body.clear();
        return Ok(get);
    }
    Ok(head)
}

/// True when two URIs share a SURT, or redirect to URIs that do.
pub fn same_resource(
    transport: &dyn Transport,
    a: &str,
    b: &str,
    max_hops: usize,
) -> Result<bool, RedirectError> {
    if surt(a)? == surt(b)? {
        return Ok(true);
    }
    let fa = resolve_redirects(transport, a, max_hops)?.final_uri;
    let fb = resolve_redirects(transport, b, max_hops)?.final_uri;
    Ok(surt(&fa)? == surt(&fb)?)
}
