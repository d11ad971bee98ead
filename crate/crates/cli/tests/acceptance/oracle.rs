use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mementos::http::ResponseClass;
use mementos::model::{Memento, Provenance, TimeMapRecord};
use mementos::registry::ArchiveId;

const ARCHIVES: [&str; 6] = ["a.org", "b.org", "c.org", "d.org", "e.org", "f.org"];

pub fn memento(archive: &str, dt: DateTime<Utc>, urim: String, urir_key: &str) -> Memento {
    Memento {
        urim,
        archive_id: ArchiveId::new(archive),
        memento_datetime: dt,
        urir_key: urir_key.to_string(),
        raw_urim: None,
    }
}

pub fn random_timemap(rng: &mut ChaCha8Rng, max: usize) -> TimeMapRecord {
    let mut record = TimeMapRecord::new("http://example.com/", Provenance::Aggregator).unwrap();
    for _ in 0..rng.gen_range(0..=max) {
        let a = ARCHIVES[rng.gen_range(0..ARCHIVES.len())];
        let dt = Utc
            .with_ymd_and_hms(rng.gen_range(1996..=2018), 1, 1, 0, 0, 0)
            .unwrap()
            + chrono::Duration::days(rng.gen_range(0..4) * 90)
            + chrono::Duration::hours(rng.gen_range(0..3));
        let urim = format!(
            "http://{a}/{}/{}",
            dt.format("%Y%m%d%H%M%S"),
            rng.gen_range(0..4)
        );
        record.mementos.push(memento(a, dt, urim, "com,example)/"));
    }
    record
}

pub type Row = (String, DateTime<Utc>, String);

pub fn flatten(record: &TimeMapRecord) -> Vec<Row> {
    record
        .mementos
        .iter()
        .map(|m| (m.archive_id.to_string(), m.memento_datetime, m.urim.clone()))
        .collect()
}

/// Earliest (datetime, urim) per (archive, year); archives in order of first
/// appearance, years ascending.
pub fn yearly(record: &TimeMapRecord) -> Vec<Row> {
    let mut best: BTreeMap<(String, i32), (DateTime<Utc>, String)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for m in &record.mementos {
        let a = m.archive_id.to_string();
        if !order.contains(&a) {
            order.push(a.clone());
        }
        let cand = (m.memento_datetime, m.urim.clone());
        let slot = best
            .entry((a, m.memento_datetime.year()))
            .or_insert_with(|| cand.clone());
        if cand < *slot {
            *slot = cand;
        }
    }
    order
        .iter()
        .flat_map(|a| {
            best.iter()
                .filter(move |((arch, _), _)| arch == a)
                .map(|((arch, _), (dt, urim))| (arch.clone(), *dt, urim.clone()))
        })
        .collect()
}

/// A selection of `total` mementos of which `failing` are non-archival.
pub fn dataset_selection(
    total: usize,
    failing: usize,
) -> (Vec<Memento>, HashMap<String, ResponseClass>) {
    let ms: Vec<Memento> = (0..total)
        .map(|i| {
            let a = ARCHIVES[i % ARCHIVES.len()];
            memento(
                a,
                Utc.timestamp_opt(1_000_000_000 + i as i64, 0).unwrap(),
                format!("http://{a}/{i:06}"),
                "k",
            )
        })
        .collect();
    let step = total / failing;
    let classes = ms
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let c = if i % step == 0 && i / step < failing {
                ResponseClass::NonArchivalError
            } else {
                ResponseClass::ArchivalOk
            };
            (m.urim.clone(), c)
        })
        .collect();
    (ms, classes)
}

pub fn small_cap_instance(rng: &mut ChaCha8Rng) -> (Vec<Memento>, usize) {
    let n = rng.gen_range(1..=12);
    let urirs = rng.gen_range(1..=5);
    let years = rng.gen_range(1..=6);
    let ms = (0..n)
        .map(|i| {
            let dt = Utc
                .with_ymd_and_hms(
                    2000 + rng.gen_range(0..years),
                    rng.gen_range(1..=12),
                    1,
                    0,
                    0,
                    0,
                )
                .unwrap();
            memento(
                "a.org",
                dt,
                format!("http://a.org/{i}"),
                &format!("com,u{})/", rng.gen_range(0..urirs)),
            )
        })
        .collect();
    (ms, rng.gen_range(0..=n + 2))
}

pub fn coverage(ms: &[Memento]) -> (usize, usize) {
    let urirs: BTreeSet<_> = ms.iter().map(|m| &m.urir_key).collect();
    let years: BTreeSet<_> = ms.iter().map(|m| m.year()).collect();
    (urirs.len(), years.len())
}

/// Best (URI-R coverage, year coverage) over every size-`k` subset.
pub fn best_coverage(ms: &[Memento], k: usize) -> (usize, usize) {
    let n = ms.len();
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| {
            let pick: Vec<Memento> = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ms[i].clone())
                .collect();
            coverage(&pick)
        })
        .max()
        .unwrap_or((0, 0))
}

pub fn is_subsequence(sub: &[Memento], of: &[Memento]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|m| it.any(|x| x == m))
}

/// Largest count whose projected time fits the budget, by linear search.
pub fn budget(probe: &[Duration], budget: Duration, cap: usize) -> usize {
    let sum: u128 = probe.iter().map(Duration::as_nanos).sum();
    let n = probe.len() as u128;
    let mut k = 0;
    while k < cap && (k as u128 + 1) * sum <= budget.as_nanos() * n {
        k += 1;
    }
    k
}
