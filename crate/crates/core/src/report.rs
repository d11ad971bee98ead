//! Persisted selections and the summary tables derived from them.
//!
//! The manifest is a tab-separated table with one memento per row:
//! `archive_id`, `urir`, `urim`, `datetime` (14-digit UTC) and
//! `classification` (`-` when the memento was never probed).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use chrono::{DateTime, Datelike, Utc};
use thiserror::Error;

use crate::canonical;
use crate::http::ResponseClass;
use crate::model::{
    format_timestamp14, parse_timestamp14, Memento, OriginalResource, PathBucket, SourceTag,
};
use crate::registry::ArchiveId;

pub const MANIFEST_HEADER: &str = "archive_id\turir\turim\tdatetime\tclassification";
pub const URIR_TABLE_HEADER: &str =
    "source\turi\tfinal_uri\tcanonical_key\tpath_length\tlive_status";
pub const FIRST_YEAR: i32 = 1996;
pub const LAST_YEAR: i32 = 2017;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TableError {
    pub line: usize,
    pub message: String,
}

fn table_err(line: usize, message: impl Into<String>) -> TableError {
    TableError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub archive_id: ArchiveId,
    pub urir: String,
    pub urim: String,
    pub datetime: DateTime<Utc>,
    pub classification: Option<ResponseClass>,
}

impl ManifestRow {
    pub fn from_memento(m: &Memento, urir: &str, class: Option<ResponseClass>) -> Self {
        ManifestRow {
            archive_id: m.archive_id.clone(),
            urir: urir.to_string(),
            urim: m.urim.clone(),
            datetime: m.memento_datetime,
            classification: class,
        }
    }
}

pub fn write_manifest(rows: &[ManifestRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 160);
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.archive_id,
            r.urir,
            r.urim,
            format_timestamp14(&r.datetime),
            r.classification.map_or("-", ResponseClass::label)
        );
    }
    out
}

fn data_lines<'a>(text: &'a str, header: &str) -> impl Iterator<Item = (usize, &'a str)> {
    let header = header.to_string();
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(move |(i, l)| !l.trim().is_empty() && !(*i == 1 && *l == header))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, TableError> {
    data_lines(text, MANIFEST_HEADER)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(table_err(
                    n,
                    format!("expected 5 fields, found {}", f.len()),
                ));
            }
            let datetime =
                parse_timestamp14(f[3]).ok_or_else(|| table_err(n, "bad 14-digit datetime"))?;
            let classification = match f[4] {
                "-" | "" => None,
                c => Some(c.parse().map_err(|e: String| table_err(n, e))?),
            };
            if f[0].is_empty() || f[1].is_empty() || f[2].is_empty() {
                return Err(table_err(n, "empty field"));
            }
            Ok(ManifestRow {
                archive_id: ArchiveId::new(f[0]),
                urir: f[1].to_string(),
                urim: f[2].to_string(),
                datetime,
                classification,
            })
        })
        .collect()
}

pub fn write_urir_table(resources: &[OriginalResource]) -> String {
    let mut out = String::new();
    out.push_str(URIR_TABLE_HEADER);
    out.push('\n');
    for r in resources {
        let status = r
            .live_status
            .map_or_else(|| "-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.source, r.uri, r.final_uri, r.canonical_key, r.path_bucket, status
        );
    }
    out
}

pub fn parse_urir_table(text: &str) -> Result<Vec<OriginalResource>, TableError> {
    data_lines(text, URIR_TABLE_HEADER)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(table_err(
                    n,
                    format!("expected 6 fields, found {}", f.len()),
                ));
            }
            let source: SourceTag = f[0].parse().map_err(|e: String| table_err(n, e))?;
            let path_bucket: PathBucket = f[4].parse().map_err(|e: String| table_err(n, e))?;
            let live_status = match f[5] {
                "-" => None,
                s => Some(
                    s.parse()
                        .map_err(|_| table_err(n, format!("bad status `{s}`")))?,
                ),
            };
            Ok(OriginalResource {
                source,
                uri: f[1].to_string(),
                final_uri: f[2].to_string(),
                canonical_key: f[3].to_string(),
                path_bucket,
                live_status,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveSummary {
    pub archive_id: ArchiveId,
    pub urirs: usize,
    pub urims: usize,
    pub per_year: BTreeMap<i32, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSummary {
    /// Sorted by URI-M count, largest first.
    pub archives: Vec<ArchiveSummary>,
    pub year_totals: BTreeMap<i32, usize>,
    pub total_urims: usize,
    pub unique_urirs: usize,
    /// Unique URI-Rs per path-length bucket.
    pub path_histogram: [usize; 5],
}

fn urir_key(urir: &str) -> String {
    canonical::surt(urir).unwrap_or_else(|_| urir.to_string())
}

/// Per-archive and per-year counts plus the path-length histogram.
pub fn finalize(rows: &[ManifestRow]) -> DatasetSummary {
    let mut per_archive: BTreeMap<&ArchiveId, (BTreeSet<String>, BTreeMap<i32, usize>)> =
        BTreeMap::new();
    let mut unique: HashMap<String, PathBucket> = HashMap::new();
    let mut year_totals: BTreeMap<i32, usize> = BTreeMap::new();
    for r in rows {
        let key = urir_key(&r.urir);
        let year = r.datetime.year();
        let entry = per_archive.entry(&r.archive_id).or_default();
        entry.0.insert(key.clone());
        *entry.1.entry(year).or_insert(0) += 1;
        *year_totals.entry(year).or_insert(0) += 1;
        unique
            .entry(key)
            .or_insert_with(|| canonical::path_length(&r.urir).unwrap_or(PathBucket::S0));
    }
    let mut archives: Vec<ArchiveSummary> = per_archive
        .into_iter()
        .map(|(id, (urirs, per_year))| ArchiveSummary {
            archive_id: id.clone(),
            urirs: urirs.len(),
            urims: per_year.values().sum(),
            per_year,
        })
        .collect();
    archives.sort_by(|a, b| {
        b.urims
            .cmp(&a.urims)
            .then_with(|| a.archive_id.cmp(&b.archive_id))
    });
    let mut path_histogram = [0; 5];
    for b in unique.values() {
        path_histogram[b.index()] += 1;
    }
    DatasetSummary {
        archives,
        year_totals,
        total_urims: rows.len(),
        unique_urirs: unique.len(),
        path_histogram,
    }
}

impl DatasetSummary {
    /// Column years: 1996 to 2017, widened to cover the data.
    pub fn year_range(&self) -> std::ops::RangeInclusive<i32> {
        let lo = self
            .year_totals
            .keys()
            .next()
            .copied()
            .unwrap_or(FIRST_YEAR);
        let hi = self.year_totals.keys().last().copied().unwrap_or(LAST_YEAR);
        lo.min(FIRST_YEAR)..=hi.max(LAST_YEAR)
    }
}

/// `archive,total,<years...>` with a closing Total row; header only when
/// there is no data.
pub fn urims_per_year_csv(summary: &DatasetSummary) -> String {
    let years = summary.year_range();
    let mut out = String::from("archive,total");
    for y in years.clone() {
        let _ = write!(out, ",{y}");
    }
    out.push('\n');
    if summary.archives.is_empty() {
        return out;
    }
    for a in &summary.archives {
        let _ = write!(out, "{},{}", a.archive_id, a.urims);
        for y in years.clone() {
            let _ = write!(out, ",{}", a.per_year.get(&y).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    let _ = write!(out, "Total,{}", summary.total_urims);
    for y in years {
        let _ = write!(
            out,
            ",{}",
            summary.year_totals.get(&y).copied().unwrap_or(0)
        );
    }
    out.push('\n');
    out
}

/// URI-Rs and URI-Ms per archive, ordered by URI-R count.
pub fn archive_totals_csv(summary: &DatasetSummary) -> String {
    let mut rows: Vec<&ArchiveSummary> = summary.archives.iter().collect();
    rows.sort_by(|a, b| {
        b.urirs
            .cmp(&a.urirs)
            .then(b.urims.cmp(&a.urims))
            .then_with(|| a.archive_id.cmp(&b.archive_id))
    });
    let mut out = String::from("archive,urirs,urims\n");
    if rows.is_empty() {
        return out;
    }
    for a in &rows {
        let _ = writeln!(out, "{},{},{}", a.archive_id, a.urirs, a.urims);
    }
    let pairs: usize = rows.iter().map(|a| a.urirs).sum();
    let _ = writeln!(out, "Total,{pairs},{}", summary.total_urims);
    out
}

pub fn year_histogram_csv(summary: &DatasetSummary) -> String {
    let mut out = String::from("year,urims\n");
    if summary.archives.is_empty() {
        return out;
    }
    for y in summary.year_range() {
        let _ = writeln!(
            out,
            "{y},{}",
            summary.year_totals.get(&y).copied().unwrap_or(0)
        );
    }
    out
}

pub fn path_histogram_csv(summary: &DatasetSummary) -> String {
    let mut out = String::from("path_length,urirs\n");
    if summary.unique_urirs == 0 {
        return out;
    }
    for b in PathBucket::ALL {
        let _ = writeln!(out, "{},{}", b.label(), summary.path_histogram[b.index()]);
    }
    out
}

/// Selected URI-Rs per source and path-length bucket; sources in order of
/// first appearance.
pub fn source_bucket_csv(resources: &[OriginalResource]) -> String {
    let mut order: Vec<&SourceTag> = Vec::new();
    let mut cells: HashMap<&SourceTag, [usize; 5]> = HashMap::new();
    for r in resources {
        let row = cells.entry(&r.source).or_insert_with(|| {
            order.push(&r.source);
            [0; 5]
        });
        row[r.path_bucket.index()] += 1;
    }
    let mut out = String::from("source,s0,s1,s2,s3,s4+,total\n");
    if resources.is_empty() {
        return out;
    }
    let mut totals = [0usize; 5];
    for tag in order {
        let row = cells[tag];
        let _ = write!(out, "{tag}");
        for (i, n) in row.iter().enumerate() {
            totals[i] += n;
            let _ = write!(out, ",{n}");
        }
        let _ = writeln!(out, ",{}", row.iter().sum::<usize>());
    }
    out.push_str("Total");
    for n in totals {
        let _ = write!(out, ",{n}");
    }
    let _ = writeln!(out, ",{}", totals.iter().sum::<usize>());
    out
}

/// Live status of selected URI-Rs per bucket: 200, 4xx/5xx, anything else.
pub fn status_csv(resources: &[OriginalResource]) -> String {
    let mut rows = [[0usize; 3]; 5];
    for r in resources {
        let col = match r.live_status {
            Some(200) => 0,
            Some(s) if (400..600).contains(&s) => 1,
            _ => 2,
        };
        rows[r.path_bucket.index()][col] += 1;
    }
    let mut out = String::from("path_length,200,4xx/5xx,other,total\n");
    if resources.is_empty() {
        return out;
    }
    let mut totals = [0usize; 3];
    for b in PathBucket::ALL {
        let row = rows[b.index()];
        for i in 0..3 {
            totals[i] += row[i];
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            b.label(),
            row[0],
            row[1],
            row[2],
            row.iter().sum::<usize>()
        );
    }
    let _ = writeln!(
        out,
        "Total,{},{},{},{}",
        totals[0],
        totals[1],
        totals[2],
        totals.iter().sum::<usize>()
    );
    out
}

/// Per-archive counts after each discovery stage, as
/// `archive,<stage>_urirs,<stage>_urims,...`.
pub fn stage_counts_csv(
    stages: &[(String, BTreeMap<ArchiveId, crate::discovery::ArchiveCount>)],
) -> String {
    let mut out = String::from("archive");
    for (name, _) in stages {
        let _ = write!(out, ",{name}_urirs,{name}_urims");
    }
    out.push('\n');
    let archives: BTreeSet<&ArchiveId> = stages.iter().flat_map(|(_, c)| c.keys()).collect();
    let last = stages.last().map(|(_, c)| c);
    let mut archives: Vec<&ArchiveId> = archives.into_iter().collect();
    archives.sort_by_key(|a| {
        let c = last.and_then(|c| c.get(*a)).copied().unwrap_or_default();
        (
            std::cmp::Reverse(c.urirs),
            std::cmp::Reverse(c.urims),
            (*a).clone(),
        )
    });
    let mut totals = vec![(0usize, 0usize); stages.len()];
    for a in archives {
        let _ = write!(out, "{a}");
        for (i, (_, counts)) in stages.iter().enumerate() {
            let c = counts.get(a).copied().unwrap_or_default();
            totals[i].0 += c.urirs;
            totals[i].1 += c.urims;
            let _ = write!(out, ",{},{}", c.urirs, c.urims);
        }
        out.push('\n');
    }
    if !stages.iter().all(|(_, c)| c.is_empty()) {
        out.push_str("Total");
        for (r, m) in totals {
            let _ = write!(out, ",{r},{m}");
        }
        out.push('\n');
    }
    out
}
