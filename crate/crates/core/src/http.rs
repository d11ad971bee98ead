//! Minimal HTTP vocabulary shared by transports, fixtures and the
//! archival/non-archival response classifier.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MEMENTO_DATETIME: &str = "Memento-Datetime";
pub const ACCEPT_DATETIME: &str = "Accept-Datetime";

/// Ordered header list with case-insensitive lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Headers(Vec::new())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Headers {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Headers(
            iter.into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Head,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Head => "HEAD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub uri: String,
    pub headers: Headers,
}

impl HttpRequest {
    pub fn get(uri: impl Into<String>) -> Self {
        HttpRequest {
            method: Method::Get,
            uri: uri.into(),
            headers: Headers::new(),
        }
    }

    pub fn head(uri: impl Into<String>) -> Self {
        HttpRequest {
            method: Method::Head,
            uri: uri.into(),
            headers: Headers::new(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.insert(name, value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Headers,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_redirect(&self) -> bool {
        (300..400).contains(&self.status) && self.headers.contains("Location")
    }

    pub fn class(&self) -> ResponseClass {
        classify_response(self.status, &self.headers)
    }
}

/// Whether a response came from the archive's holdings or from the archive
/// (or live web) itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseClass {
    ArchivalOk,
    ArchivalError,
    NonArchivalError,
    Live,
}

impl ResponseClass {
    pub fn label(self) -> &'static str {
        match self {
            ResponseClass::ArchivalOk => "archival-ok",
            ResponseClass::ArchivalError => "archival-error",
            ResponseClass::NonArchivalError => "non-archival-error",
            ResponseClass::Live => "live",
        }
    }
}

impl fmt::Display for ResponseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ResponseClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "archival-ok" => Ok(ResponseClass::ArchivalOk),
            "archival-error" => Ok(ResponseClass::ArchivalError),
            "non-archival-error" => Ok(ResponseClass::NonArchivalError),
            "live" => Ok(ResponseClass::Live),
            other => Err(format!("unknown response class `{other}`")),
        }
    }
}

/// Splits responses by status and the presence of `Memento-Datetime`.
pub fn classify_response(status: u16, headers: &Headers) -> ResponseClass {
    let archival = headers.contains(MEMENTO_DATETIME);
    let error = (400..600).contains(&status);
    match (status, archival, error) {
        (200, true, _) => ResponseClass::ArchivalOk,
        (_, true, true) => ResponseClass::ArchivalError,
        (_, false, true) => ResponseClass::NonArchivalError,
        _ => ResponseClass::Live,
    }
}

/// Parses an RFC 1123 HTTP-date such as `Sun, 08 Jan 2017 09:15:41 GMT`.
pub fn parse_http_date(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc2822(s.trim())
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

pub fn format_http_date(dt: &DateTime<Utc>) -> String {
    dt.format("%a, %d %b %Y %H:%M:%S GMT").to_string()
}
