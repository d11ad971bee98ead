//! `application/link-format` TimeMaps, the compact two-column format, and
//! the per-archive yearly reduction.
//!
//! The compact format has one memento per line: a 14-digit UTC timestamp, a
//! single space and the URI-M.

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use thiserror::Error;
use url::Url;

use crate::canonical::{self, CanonError};
use crate::http::parse_http_date;
use crate::model::{format_timestamp14, parse_timestamp14, Memento, Provenance, TimeMapRecord};
use crate::registry::{ArchiveId, Registry, RegistryError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkEntry {
    pub target: String,
    pub rel: Vec<String>,
    pub datetime: Option<DateTime<Utc>>,
    pub type_attr: Option<String>,
    pub from_attr: Option<DateTime<Utc>>,
    pub until_attr: Option<DateTime<Utc>>,
}

impl LinkEntry {
    pub fn has_rel(&self, rel: &str) -> bool {
        self.rel.iter().any(|r| r == rel)
    }

    pub fn is_memento(&self) -> bool {
        self.has_rel("memento")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    /// Accepts unquoted values, stray separators, an unterminated final
    /// quoted value and unknown hosts (those mementos are dropped).
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Error)]
pub enum LinkFormatError {
    #[error("link-format parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("compact TimeMap parse error on line {line}: {message}")]
    CompactLine { line: usize, message: String },
    #[error("TimeMap has no rel=\"original\" link and no URI-R was supplied")]
    MissingOriginal,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Canon(#[from] CanonError),
}

fn parse_err(offset: usize, message: impl Into<String>) -> LinkFormatError {
    LinkFormatError::Parse {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.text[start..self.pos]
    }
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "!#$&+-.^_`|~*".contains(c)
}

fn quoted(cur: &mut Cursor<'_>, mode: ParseMode) -> Result<String, LinkFormatError> {
    let open = cur.pos;
    cur.bump();
    let mut value = String::new();
    loop {
        match cur.bump() {
            Some('"') => return Ok(value),
            Some('\\') => match cur.bump() {
                Some(c) => value.push(c),
                None => break,
            },
            Some(c) => value.push(c),
            None => break,
        }
    }
    match mode {
        ParseMode::Lenient => Ok(value.trim_end().to_string()),
        ParseMode::Strict => Err(parse_err(open, "unterminated quoted value")),
    }
}

/// Splits link-format text into entries.
pub fn parse_links(text: &str, mode: ParseMode) -> Result<Vec<LinkEntry>, LinkFormatError> {
    let mut cur = Cursor { text, pos: 0 };
    let mut entries = Vec::new();
    let mut after_comma = false;
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => {
                if after_comma && mode == ParseMode::Strict {
                    return Err(parse_err(cur.pos, "trailing comma"));
                }
                break;
            }
            Some(',') if mode == ParseMode::Lenient => {
                cur.bump();
                continue;
            }
            Some('<') => {}
            Some(c) => return Err(parse_err(cur.pos, format!("expected `<`, found `{c}`"))),
        }
        cur.bump();
        let target_start = cur.pos;
        let target = cur.take_while(|c| c != '>');
        if cur.bump() != Some('>') {
            return Err(parse_err(target_start, "unterminated `<` target"));
        }
        let mut entry = LinkEntry {
            target: target.trim().to_string(),
            rel: Vec::new(),
            datetime: None,
            type_attr: None,
            from_attr: None,
            until_attr: None,
        };
        after_comma = false;
        loop {
            cur.skip_ws();
            match cur.peek() {
                Some(';') => {
                    cur.bump();
                    cur.skip_ws();
                }
                Some(',') => {
                    cur.bump();
                    after_comma = true;
                    break;
                }
                None => break,
                Some(c) => {
                    return Err(parse_err(
                        cur.pos,
                        format!("expected `;` or `,`, found `{c}`"),
                    ))
                }
            }
            let name_at = cur.pos;
            let name = cur.take_while(is_token_char).to_ascii_lowercase();
            if name.is_empty() {
                if mode == ParseMode::Lenient && matches!(cur.peek(), Some(';' | ',') | None) {
                    continue;
                }
                return Err(parse_err(name_at, "expected attribute name"));
            }
            cur.skip_ws();
            let value = if cur.peek() == Some('=') {
                cur.bump();
                cur.skip_ws();
                let value_at = cur.pos;
                if cur.peek() == Some('"') {
                    Some((value_at, quoted(&mut cur, mode)?))
                } else {
                    let raw = match mode {
                        ParseMode::Strict => cur.take_while(is_token_char),
                        ParseMode::Lenient => cur.take_while(|c| c != ';' && c != ',' && c != '\n'),
                    };
                    let raw = raw.trim();
                    if raw.is_empty() {
                        return Err(parse_err(value_at, format!("empty value for `{name}`")));
                    }
                    Some((value_at, raw.to_string()))
                }
            } else {
                None
            };
            apply_attribute(&mut entry, &name, value, mode)?;
        }
        if entry.rel.is_empty() && mode == ParseMode::Strict {
            return Err(parse_err(
                target_start,
                format!("link <{}> has no rel", entry.target),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn apply_attribute(
    entry: &mut LinkEntry,
    name: &str,
    value: Option<(usize, String)>,
    mode: ParseMode,
) -> Result<(), LinkFormatError> {
    let Some((at, value)) = value else {
        return Ok(());
    };
    let date = |v: &str| -> Result<Option<DateTime<Utc>>, LinkFormatError> {
        match parse_http_date(v) {
            Some(d) => Ok(Some(d)),
            None if mode == ParseMode::Lenient => Ok(None),
            None => Err(parse_err(at, format!("bad HTTP-date `{v}`"))),
        }
    };
    match name {
        "rel" => entry
            .rel
            .extend(value.split_whitespace().map(|r| r.to_ascii_lowercase())),
        "datetime" => entry.datetime = date(&value)?,
        "from" => entry.from_attr = date(&value)?,
        "until" => entry.until_attr = date(&value)?,
        "type" => entry.type_attr = Some(value),
        _ => {}
    }
    Ok(())
}

/// A parsed link-format TimeMap body before archive attribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMapDocument {
    pub entries: Vec<LinkEntry>,
}

impl TimeMapDocument {
    pub fn parse(body: &[u8], mode: ParseMode) -> Result<Self, LinkFormatError> {
        let text =
            std::str::from_utf8(body).map_err(|e| parse_err(e.valid_up_to(), "invalid UTF-8"))?;
        if text.trim().is_empty() {
            return Err(parse_err(0, "empty TimeMap"));
        }
        Ok(TimeMapDocument {
            entries: parse_links(text, mode)?,
        })
    }

    pub fn original(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.has_rel("original"))
            .map(|e| e.target.as_str())
    }

    /// Further pages of a paged TimeMap.
    pub fn timemap_links(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.has_rel("timemap") && !e.has_rel("self"))
            .map(|e| e.target.as_str())
    }

    pub fn memento_entries(&self) -> impl Iterator<Item = &LinkEntry> {
        self.entries.iter().filter(|e| e.is_memento())
    }
}

/// Turns TimeMap bodies into [`TimeMapRecord`]s, attributing every memento
/// to an archive of the registry.
#[derive(Debug, Clone)]
pub struct TimeMapParser<'r> {
    registry: &'r Registry,
    mode: ParseMode,
    provenance: Provenance,
    only_archive: Option<ArchiveId>,
    fetched_at: Option<DateTime<Utc>>,
}

impl<'r> TimeMapParser<'r> {
    pub fn new(registry: &'r Registry) -> Self {
        TimeMapParser {
            registry,
            mode: ParseMode::Lenient,
            provenance: Provenance::Aggregator,
            only_archive: None,
            fetched_at: None,
        }
    }

    pub fn mode(mut self, mode: ParseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn parse_mode(&self) -> ParseMode {
        self.mode
    }

    pub fn provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Attribute mementos on unknown hosts to `archive` and drop those the
    /// registry assigns to some other archive.
    pub fn only_archive(mut self, archive: ArchiveId) -> Self {
        self.only_archive = Some(archive);
        self
    }

    pub fn fetched_at(mut self, at: DateTime<Utc>) -> Self {
        self.fetched_at = Some(at);
        self
    }

    pub fn parse(
        &self,
        body: &[u8],
        urir_hint: Option<&str>,
    ) -> Result<TimeMapRecord, LinkFormatError> {
        let doc = TimeMapDocument::parse(body, self.mode)?;
        self.record_from(&doc, urir_hint)
    }

    pub fn record_from(
        &self,
        doc: &TimeMapDocument,
        urir_hint: Option<&str>,
    ) -> Result<TimeMapRecord, LinkFormatError> {
        let urir = doc
            .original()
            .or(urir_hint)
            .ok_or(LinkFormatError::MissingOriginal)?;
        let mut record = TimeMapRecord::new(urir, self.provenance)?;
        if let Some(at) = self.fetched_at {
            record.fetched_at = at;
        }
        for entry in doc.memento_entries() {
            let Some(datetime) = entry.datetime else {
                if self.mode == ParseMode::Strict {
                    return Err(parse_err(
                        0,
                        format!("memento <{}> has no datetime", entry.target),
                    ));
                }
                log::warn!("skipping memento without datetime: {}", entry.target);
                continue;
            };
            if let Some(m) = self.attribute(&entry.target, datetime, &record.urir_key)? {
                record.mementos.push(m);
            }
        }
        Ok(record)
    }

    fn attribute(
        &self,
        urim: &str,
        datetime: DateTime<Utc>,
        urir_key: &str,
    ) -> Result<Option<Memento>, LinkFormatError> {
        let known = match self.registry.archive_of(urim) {
            Ok(a) => Some(a),
            Err(RegistryError::UnknownArchive(_)) => None,
            Err(e) if self.mode == ParseMode::Lenient => {
                log::warn!("skipping memento: {e}");
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        };
        let archive = match (known, &self.only_archive) {
            (Some(a), Some(only)) if &a.id != only => {
                log::warn!("dropping {urim}: served by {} rather than {only}", a.id);
                return Ok(None);
            }
            (Some(a), _) => a,
            (None, Some(only)) => self
                .registry
                .get(only.as_str())
                .ok_or_else(|| RegistryError::UnknownArchive(only.to_string()))?,
            (None, None) if self.mode == ParseMode::Lenient => {
                log::warn!("skipping memento from unknown archive: {urim}");
                return Ok(None);
            }
            (None, None) => return Err(RegistryError::UnknownArchive(urim.to_string()).into()),
        };
        Ok(Some(Memento {
            urim: urim.to_string(),
            archive_id: archive.id.clone(),
            memento_datetime: datetime,
            urir_key: urir_key.to_string(),
            raw_urim: archive.raw_scheme.raw_urim(urim),
        }))
    }
}

/// Parses a link-format TimeMap leniently.
pub fn parse_timemap(
    body: &[u8],
    urir_hint: Option<&str>,
    registry: &Registry,
) -> Result<TimeMapRecord, LinkFormatError> {
    TimeMapParser::new(registry).parse(body, urir_hint)
}

pub fn serialize_compact(record: &TimeMapRecord) -> String {
    let mut out = String::with_capacity(record.mementos.len() * 96);
    for m in &record.mementos {
        out.push_str(&format_timestamp14(&m.memento_datetime));
        out.push(' ');
        out.push_str(&m.urim);
        out.push('\n');
    }
    out
}

/// Link-format rendering: the original, then one memento per line with
/// `first`/`last` marked.
pub fn serialize_link_format(record: &TimeMapRecord) -> String {
    let mut lines = vec![format!("<{}>; rel=\"original\"", record.urir)];
    let n = record.mementos.len();
    for (i, m) in record.mementos.iter().enumerate() {
        let rel = match (i == 0, i + 1 == n) {
            (true, true) => "first last memento",
            (true, false) => "first memento",
            (false, true) => "last memento",
            (false, false) => "memento",
        };
        lines.push(format!(
            "<{}>; rel=\"{rel}\"; datetime=\"{}\"",
            m.urim,
            crate::http::format_http_date(&m.memento_datetime)
        ));
    }
    let mut out = lines.join(",\n");
    out.push('\n');
    out
}

/// `(datetime, URI-M)` pairs from compact text; blank lines are skipped.
pub fn parse_compact_lines(text: &str) -> Result<Vec<(DateTime<Utc>, String)>, LinkFormatError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| LinkFormatError::CompactLine {
            line: i + 1,
            message: message.to_string(),
        };
        let (stamp, urim) = line
            .split_once(' ')
            .ok_or_else(|| bad("expected `<14-digit timestamp> <URI-M>`"))?;
        let datetime = parse_timestamp14(stamp).ok_or_else(|| bad("bad 14-digit timestamp"))?;
        if urim.is_empty() || urim.chars().any(char::is_whitespace) {
            return Err(bad("URI-M must be a single nonempty token"));
        }
        out.push((datetime, urim.to_string()));
    }
    Ok(out)
}

pub fn parse_compact(
    text: &str,
    urir: &str,
    registry: &Registry,
    provenance: Provenance,
) -> Result<TimeMapRecord, LinkFormatError> {
    let mut record = TimeMapRecord::new(urir, provenance)?;
    for (datetime, urim) in parse_compact_lines(text)? {
        record.mementos.push(Memento::resolve(
            urim,
            datetime,
            record.urir_key.clone(),
            registry,
        )?);
    }
    Ok(record)
}

/// The original URI embedded in a Wayback-style URI-M
/// (`.../20041020191800/http://www.w3.org/` gives `http://www.w3.org/`).
pub fn original_from_urim(urim: &str) -> Option<String> {
    let url = Url::parse(urim).ok()?;
    let path_and_more = &urim[urim.find("://")? + 3..];
    let path_and_more = &path_and_more[path_and_more.find('/')?..];
    let _ = url;
    let mut rest = path_and_more;
    while let Some(stripped) = rest.strip_prefix('/') {
        let (segment, tail) = stripped.split_at(stripped.find('/').unwrap_or(stripped.len()));
        if segment.len() >= 14 && segment.as_bytes()[..14].iter().all(u8::is_ascii_digit) {
            let original = tail.strip_prefix('/')?;
            return canonical::parse_web_uri(original)
                .ok()
                .map(|_| original.to_string());
        }
        rest = tail;
    }
    None
}

/// Drops repeated URI-Ms, keeping the first occurrence.
pub fn dedupe(mut record: TimeMapRecord) -> TimeMapRecord {
    let mut seen = HashSet::with_capacity(record.mementos.len());
    record.mementos.retain(|m| seen.insert(m.urim.clone()));
    record
}

/// Keeps, for every (archive, UTC year), the memento with the earliest
/// datetime; ties go to the lexicographically smallest URI-M. Output is
/// grouped by archive in order of first appearance, then by year.
pub fn yearly_first_filter(mut record: TimeMapRecord) -> TimeMapRecord {
    let mut archive_rank: HashMap<ArchiveId, usize> = HashMap::new();
    let mut best: HashMap<(usize, i32), Memento> = HashMap::new();
    for m in record.mementos.drain(..) {
        let next_rank = archive_rank.len();
        let rank = *archive_rank
            .entry(m.archive_id.clone())
            .or_insert(next_rank);
        let key = (rank, m.year());
        match best.get(&key) {
            Some(current)
                if (current.memento_datetime, &current.urim) <= (m.memento_datetime, &m.urim) => {}
            _ => {
                best.insert(key, m);
            }
        }
    }
    let mut kept: Vec<_> = best.into_iter().collect();
    kept.sort_by_key(|(key, _)| *key);
    record.mementos = kept.into_iter().map(|(_, m)| m).collect();
    record
}
