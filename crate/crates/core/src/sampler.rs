//! Cutting the collected mementos down to what can be downloaded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::http::ResponseClass;
use crate::model::{Memento, SelectionConstraints};
use crate::registry::ArchiveId;

pub const DEFAULT_PROBE_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveBudget {
    pub archive_id: ArchiveId,
    #[serde(with = "crate::model::duration_secs")]
    pub probe_mean_cost: Duration,
    pub allowed_count: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplerError {
    #[error("no probe downloads for `{0}`")]
    EmptyProbe(ArchiveId),
}

/// Mean probe cost, and how many mementos fit the download budget (never
/// more than the per-archive cap).
pub fn estimate_budget(
    archive: &ArchiveId,
    probe: &[Duration],
    constraints: &SelectionConstraints,
) -> Result<ArchiveBudget, SamplerError> {
    if probe.is_empty() {
        return Err(SamplerError::EmptyProbe(archive.clone()));
    }
    let n = probe.len() as u128;
    let total: u128 = probe.iter().map(Duration::as_nanos).sum();
    let cap = constraints.max_urims_per_archive;
    // floor(budget / (total / n)) without rounding the mean.
    let allowed = match total {
        0 => cap,
        _ => {
            let fit = constraints.download_budget.as_nanos() * n / total;
            usize::try_from(fit).unwrap_or(usize::MAX).min(cap)
        }
    };
    let mean = total / n;
    Ok(ArchiveBudget {
        archive_id: archive.clone(),
        probe_mean_cost: Duration::new(
            (mean / 1_000_000_000) as u64,
            (mean % 1_000_000_000) as u32,
        ),
        allowed_count: allowed,
    })
}

/// Keeps at most the allowed number of mementos per archive.
///
/// Within an archive the kept set first covers as many URI-Rs as possible,
/// then as many years as possible; a maximum matching of URI-Rs to years
/// decides which capture stands for each URI-R. Leftover room is filled
/// evenly across URI-Rs. Random choices come from `seed`; output keeps
/// input order. Archives without a budget are left untouched.
pub fn cap_mementos(
    selection: &[Memento],
    budgets: &BTreeMap<ArchiveId, usize>,
    seed: u64,
) -> Vec<Memento> {
    let mut groups: BTreeMap<&ArchiveId, Vec<usize>> = BTreeMap::new();
    for (i, m) in selection.iter().enumerate() {
        groups.entry(&m.archive_id).or_default().push(i);
    }
    let jobs: Vec<(&ArchiveId, Vec<usize>)> = groups.into_iter().collect();
    let kept = batch::map(&jobs, |(archive, indices)| match budgets.get(*archive) {
        Some(&allowed) if indices.len() > allowed => {
            let members: Vec<&Memento> = indices.iter().map(|&i| &selection[i]).collect();
            let local_seed = seed ^ fnv1a(archive.as_str());
            choose(&members, allowed, local_seed)
                .into_iter()
                .map(|j| indices[j])
                .collect()
        }
        Some(_) => indices.clone(),
        None => {
            log::warn!("no budget for {archive}; leaving its mementos uncapped");
            indices.clone()
        }
    });
    let mut keep = vec![false; selection.len()];
    for i in kept.into_iter().flatten() {
        keep[i] = true;
    }
    selection
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(m, _)| m.clone())
        .collect()
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Indices (into `members`) of the `allowed` mementos to keep.
fn choose(members: &[&Memento], allowed: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut urir_index: HashMap<&str, usize> = HashMap::new();
    let mut urirs: Vec<&str> = Vec::new();
    let mut years: BTreeSet<i32> = BTreeSet::new();
    // cells[(u, year)] = member indices
    let mut cells: BTreeMap<(usize, i32), Vec<usize>> = BTreeMap::new();
    for (j, m) in members.iter().enumerate() {
        let u = *urir_index.entry(m.urir_key.as_str()).or_insert_with(|| {
            urirs.push(m.urir_key.as_str());
            urirs.len() - 1
        });
        years.insert(m.year());
        cells.entry((u, m.year())).or_default().push(j);
    }
    let years: Vec<i32> = years.into_iter().collect();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); urirs.len()];
    for &(u, y) in cells.keys() {
        adj[u].push(years.binary_search(&y).expect("known year"));
    }
    let matched = max_matching(&adj, years.len());

    let mut picked = vec![false; members.len()];
    let mut count = 0;
    let pick_in = |cell: &[usize], picked: &mut Vec<bool>, rng: &mut ChaCha8Rng| -> bool {
        let free: Vec<usize> = cell.iter().copied().filter(|&j| !picked[j]).collect();
        match free.choose(rng) {
            Some(&j) => {
                picked[j] = true;
                true
            }
            None => false,
        }
    };

    // One capture per URI-R: matched URI-Rs take their matched year.
    let mut order: Vec<usize> = (0..urirs.len()).filter(|&u| matched[u].is_some()).collect();
    order.extend((0..urirs.len()).filter(|&u| matched[u].is_none()));
    let mut covered_years: BTreeSet<i32> = BTreeSet::new();
    for u in order {
        if count == allowed {
            break;
        }
        let year = match matched[u] {
            Some(y) => years[y],
            None => {
                let own: Vec<i32> = cells
                    .range((u, i32::MIN)..=(u, i32::MAX))
                    .map(|((_, y), _)| *y)
                    .collect();
                *own.choose(&mut rng).expect("every URI-R has a memento")
            }
        };
        if pick_in(&cells[&(u, year)], &mut picked, &mut rng) {
            covered_years.insert(year);
            count += 1;
        }
    }

    // One capture for each year still missing.
    for &y in &years {
        if count == allowed {
            break;
        }
        if covered_years.contains(&y) {
            continue;
        }
        let in_year: Vec<usize> = cells
            .iter()
            .filter(|((_, cy), _)| *cy == y)
            .flat_map(|(_, js)| js.iter().copied())
            .collect();
        if pick_in(&in_year, &mut picked, &mut rng) {
            covered_years.insert(y);
            count += 1;
        }
    }

    // Spread the rest evenly over URI-Rs.
    if count < allowed {
        let mut per_urir: Vec<Vec<usize>> = vec![Vec::new(); urirs.len()];
        for (j, m) in members.iter().enumerate() {
            if !picked[j] {
                per_urir[urir_index[m.urir_key.as_str()]].push(j);
            }
        }
        let mut ranked: Vec<(usize, usize, usize)> = Vec::new();
        for (u, js) in per_urir.iter_mut().enumerate() {
            js.shuffle(&mut rng);
            ranked.extend(js.iter().enumerate().map(|(rank, &j)| (rank, u, j)));
        }
        ranked.sort_unstable();
        for (_, _, j) in ranked.into_iter().take(allowed - count) {
            picked[j] = true;
        }
    }

    (0..members.len()).filter(|&j| picked[j]).collect()
}

/// Kuhn's augmenting-path matching. `adj[u]` lists the right-hand vertices
/// of `u`; returns the partner of each left vertex.
fn max_matching(adj: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner: Vec<Option<usize>> = vec![None; right];
    for u in 0..adj.len() {
        let mut seen = vec![false; right];
        augment(u, adj, &mut seen, &mut owner);
    }
    let mut partner = vec![None; adj.len()];
    for (v, u) in owner.iter().enumerate() {
        if let Some(u) = u {
            partner[*u] = Some(v);
        }
    }
    partner
}

/// Drops archive-side failures (4xx/5xx without `Memento-Datetime`),
/// keeping `keep_quota` of them for tracking: the first by archive, then
/// URI-M. Mementos without a classification are kept.
pub fn prune_non_archival(
    selection: &[Memento],
    classes: &HashMap<String, ResponseClass>,
    keep_quota: usize,
) -> Vec<Memento> {
    let mut failing: Vec<&Memento> = selection
        .iter()
        .filter(|m| classes.get(&m.urim) == Some(&ResponseClass::NonArchivalError))
        .collect();
    failing.sort_by(|a, b| (&a.archive_id, &a.urim).cmp(&(&b.archive_id, &b.urim)));
    let tracked: BTreeSet<&str> = failing
        .iter()
        .take(keep_quota)
        .map(|m| m.urim.as_str())
        .collect();
    selection
        .iter()
        .filter(|m| match classes.get(&m.urim) {
            Some(ResponseClass::NonArchivalError) => tracked.contains(m.urim.as_str()),
            Some(_) => true,
            None => {
                log::warn!("no classification for {}; keeping it", m.urim);
                true
            }
        })
        .cloned()
        .collect()
}
