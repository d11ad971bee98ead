//! A synthetic web served by the fixture server, and a direct evaluation of
//! the selection conditions against it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mementos::canonical::{self, DomainKeyMode};
use mementos::client::AggregatorEndpoint;
use mementos::discovery::Candidate;
use mementos::fixture::FixtureStore;
use mementos::http::{Headers, Method};
use mementos::model::{PathBucket, SourceTag};

/// Resolution is keyed by SURT so equivalent spellings behave alike.
/// Redirect targets are terminal and always reachable.
#[derive(Default)]
pub struct World {
    uris: BTreeSet<String>,
    redirects: HashMap<String, String>,
    targets: BTreeSet<String>,
    unreachable: BTreeSet<String>,
    empty: BTreeSet<String>,
}

impl World {
    fn final_of(&self, uri: &str) -> Option<String> {
        let key = canonical::surt(uri).ok()?;
        if self.unreachable.contains(&key) {
            return None;
        }
        let fin = self
            .redirects
            .get(&key)
            .cloned()
            .unwrap_or_else(|| uri.to_string());
        let fin_key = canonical::surt(&fin).ok()?;
        (!self.unreachable.contains(&fin_key)).then_some(fin)
    }

    /// Live pages, redirects, loops for unreachable hosts, and one-memento
    /// aggregator TimeMaps for everything not marked empty.
    pub fn fixtures(&self) -> FixtureStore {
        let store = FixtureStore::new();
        let agg = AggregatorEndpoint::lanl();
        for uri in self.uris.iter().chain(&self.targets) {
            let Ok(key) = canonical::surt(uri) else {
                continue;
            };
            let mut headers = Headers::new();
            if self.unreachable.contains(&key) {
                headers.insert("Location", uri);
                store.add(Method::Get, uri, 301, headers, "");
                continue;
            }
            if let Some(target) = self.redirects.get(&key) {
                headers.insert("Location", target);
                store.add(Method::Get, uri, 301, headers, "");
                continue;
            }
            store.add(Method::Get, uri, 200, headers, "<html></html>");
            if !self.empty.contains(&key) {
                let urir = canonical::normalize(uri).unwrap();
                let body = format!(
                    "<{urir}>; rel=\"original\",\n<http://web.archive.org/web/20100101000000/{urir}>; rel=\"memento\"; datetime=\"Fri, 01 Jan 2010 00:00:00 GMT\"\n"
                );
                store.add(Method::Get, &agg.uri(&urir), 200, Headers::new(), body);
            }
        }
        store
    }
}

fn fresh(rng: &mut ChaCha8Rng) -> String {
    const TLDS: [&str; 4] = ["com", "org", "co.uk", "fr"];
    let d = rng.gen_range(0..90);
    let domain = format!("site{d}.{}", TLDS[d % TLDS.len()]);
    let sub = if rng.gen_bool(0.25) {
        format!("s{}.", rng.gen_range(0..3))
    } else {
        String::new()
    };
    let depth = rng.gen_range(0..6);
    let path: String = (0..depth)
        .map(|i| format!("/p{i}{}", rng.gen_range(0..3)))
        .collect();
    format!("http://{sub}{domain}{path}")
}

pub fn generate(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Candidate>, World) {
    let mut world = World::default();
    let mut uris: Vec<String> = Vec::new();
    while uris.len() < n {
        let uri = match rng.gen_range(0..100) {
            0..=11 if !uris.is_empty() => {
                let prev = uris[rng.gen_range(0..uris.len())].clone();
                match rng.gen_range(0..4) {
                    0 => prev,
                    1 => prev.replacen("http://", "http://www.", 1),
                    2 => prev.to_ascii_uppercase().replacen("HTTP://", "http://", 1),
                    _ => match prev
                        .find('/')
                        .and_then(|i| prev[i + 2..].find('/').map(|j| i + 2 + j))
                    {
                        Some(at) => format!("{}:80{}", &prev[..at], &prev[at..]),
                        None => format!("{prev}:80"),
                    },
                }
            }
            12..=26 => {
                let target = match uris.get(rng.gen_range(0..uris.len().max(1))) {
                    Some(prev) if rng.gen_bool(0.5) => {
                        world.final_of(prev).unwrap_or_else(|| fresh(rng))
                    }
                    _ => fresh(rng),
                };
                let short = format!(
                    "http://go{}.link/{}",
                    rng.gen_range(0..300),
                    rng.gen_range(0..50)
                );
                let key = canonical::surt(&short).unwrap();
                if !world.redirects.contains_key(&key) && !world.unreachable.contains(&key) {
                    world.targets.insert(target.clone());
                    world.redirects.insert(key, target);
                }
                short
            }
            27..=29 => format!("mailto:user{}@example.com", rng.gen_range(0..100)),
            _ => fresh(rng),
        };
        if let (Some(fin), Ok(in_key)) = (world.final_of(&uri), canonical::surt(&uri)) {
            let key = canonical::surt(&fin).unwrap();
            let is_target = world
                .targets
                .iter()
                .any(|t| canonical::surt(t).ok().as_ref() == Some(&key));
            match rng.gen_range(0..14) {
                0 => {
                    world.empty.insert(key);
                }
                1 if key == in_key && !is_target && !world.redirects.contains_key(&key) => {
                    world.unreachable.insert(key);
                }
                _ => {}
            }
        }
        world.uris.insert(uri.clone());
        uris.push(uri);
    }
    let tags = [
        SourceTag::Moz,
        SourceTag::HttpArchive,
        SourceTag::MementoDamage,
        SourceTag::Wahr("#paris".into()),
    ];
    let stream = uris
        .into_iter()
        .enumerate()
        .map(|(i, uri)| Candidate {
            uri,
            source: tags[i % tags.len()].clone(),
        })
        .collect();
    (stream, world)
}

pub struct Expected {
    /// Input SURTs of accepted candidates, in order.
    pub accepted: Vec<String>,
    pub per_bucket: Vec<usize>,
}

/// Walks the stream once, accepting a candidate iff it is not the same
/// resource as an accepted one, its bucket has room, its registrable domain
/// is new to the bucket, and its TimeMap is non-empty.
pub fn oracle_select(stream: &[Candidate], world: &World, quota: usize, target: usize) -> Expected {
    let mut accepted: Vec<(String, String)> = Vec::new();
    let mut buckets: BTreeMap<PathBucket, Vec<String>> = BTreeMap::new();
    for c in stream {
        let full = PathBucket::ALL
            .iter()
            .all(|b| buckets.get(b).map_or(0, Vec::len) >= quota);
        if accepted.len() >= target || full {
            break;
        }
        let Ok(input_key) = canonical::surt(&c.uri) else {
            continue;
        };
        let Some(fin) = world.final_of(&c.uri) else {
            continue;
        };
        let final_key = canonical::surt(&fin).unwrap();
        if accepted
            .iter()
            .any(|(i, f)| *i == input_key || *f == final_key)
        {
            continue;
        }
        let bucket = canonical::path_length(&fin).unwrap();
        let domain = canonical::domain_key(&fin, DomainKeyMode::Registrable).unwrap();
        let taken = buckets.entry(bucket).or_default();
        if taken.len() >= quota || taken.contains(&domain) || world.empty.contains(&final_key) {
            continue;
        }
        taken.push(domain);
        accepted.push((input_key, final_key));
    }
    Expected {
        accepted: accepted.into_iter().map(|(i, _)| i).collect(),
        per_bucket: PathBucket::ALL
            .iter()
            .map(|b| buckets.get(b).map_or(0, Vec::len))
            .collect(),
    }
}
