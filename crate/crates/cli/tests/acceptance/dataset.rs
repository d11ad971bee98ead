//! Rebuilds a memento manifest consistent with the published per-year and
//! per-archive tables.

use std::path::PathBuf;

use chrono::{TimeZone, Utc};

use mementos::model::format_timestamp14;
use mementos::registry::Registry;
use mementos::report::{write_manifest, ManifestRow};

pub const UNIQUE_URIRS: usize = 3_698;
pub const ROOT_URIRS: usize = 1_996;

pub struct Published {
    pub per_year: String,
    pub totals: String,
}

impl Published {
    pub fn load() -> Self {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
        Published {
            per_year: std::fs::read_to_string(dir.join("urims-per-year.csv")).unwrap(),
            totals: std::fs::read_to_string(dir.join("archive-totals.csv")).unwrap(),
        }
    }
}

/// Pool entry `i`: path length zero for the first `ROOT_URIRS`, one to five
/// segments after that.
fn pool_urir(i: usize) -> String {
    if i < ROOT_URIRS {
        return format!("http://host{i}.org/");
    }
    let path: String = (0..=(i % 5)).map(|d| format!("/d{d}")).collect();
    format!("http://host{i}.org{path}")
}

/// Archive `a` owns `n_a` consecutive pool slots starting after the
/// previous archive's, wrapping around the pool. Its k-th memento (by year)
/// goes to its `k mod n_a`-th URI-R, so every URI-R gets at least one and no
/// URI-R gets two in the same year.
pub fn manifest(published: &Published, registry: &Registry) -> String {
    let urirs: std::collections::HashMap<&str, usize> = published
        .totals
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("Total,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0], f[1].parse().unwrap())
        })
        .collect();
    let mut lines = published.per_year.lines();
    let years: Vec<i32> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(2)
        .map(|y| y.parse().unwrap())
        .collect();
    let mut rows = Vec::new();
    let mut offset = 0;
    for line in lines.filter(|l| !l.starts_with("Total,")) {
        let f: Vec<&str> = line.split(',').collect();
        let archive = registry.get(f[0]).expect("known archive");
        let host = archive.patterns().next().unwrap();
        let n = urirs[f[0]];
        let mut k = 0;
        for (year, count) in years.iter().zip(&f[2..]) {
            for j in 0..count.parse::<usize>().unwrap() {
                let urir = pool_urir((offset + k % n) % UNIQUE_URIRS);
                let dt = Utc.with_ymd_and_hms(*year, 1, 1, 0, 0, 0).unwrap()
                    + chrono::Duration::minutes(j as i64);
                rows.push(ManifestRow {
                    archive_id: archive.id.clone(),
                    urim: format!("http://{host}/web/{}/{urir}", format_timestamp14(&dt)),
                    urir,
                    datetime: dt,
                    classification: None,
                });
                k += 1;
            }
        }
        offset += n;
    }
    write_manifest(&rows)
}
