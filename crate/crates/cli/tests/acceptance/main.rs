//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod dataset;
mod oracle;
mod world;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mementos::canonical::{self, resolve_redirects, same_resource, DEFAULT_MAX_HOPS};
use mementos::client::{ArchiveClient, FetchPolicy};
use mementos::fixture::{FixtureServer, FixtureStore};
use mementos::http::{Headers, HttpRequest, Method};
use mementos::linkformat::{parse_compact, serialize_compact, yearly_first_filter, TimeMapParser};
use mementos::model::{Provenance, SelectionConstraints};
use mementos::registry::{ArchiveId, Registry};
use mementos::sampler::{cap_mementos, estimate_budget, prune_non_archival};
use mementos::transport::{HttpTransport, HttpTransportConfig, ReplayTransport};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn read_core(name: &str) -> Vec<u8> {
    std::fs::read(core_fixture(name)).unwrap()
}

fn proxied(server: &FixtureServer) -> Arc<HttpTransport> {
    Arc::new(
        HttpTransport::new(&HttpTransportConfig {
            proxy: Some(server.url()),
            ..HttpTransportConfig::default()
        })
        .unwrap(),
    )
}

fn random_uri(rng: &mut ChaCha8Rng) -> (String, String, String, String) {
    const TLDS: [&str; 6] = ["com", "org", "co.uk", "fr", "gov", "is"];
    let scheme = if rng.gen_bool(0.5) { "http" } else { "https" };
    let mut host = String::new();
    if rng.gen_bool(0.3) {
        host.push_str(["www.", "www2.", "WWW."][rng.gen_range(0..3)]);
    }
    for _ in 0..rng.gen_range(1..4) {
        let len = rng.gen_range(1..9);
        host.extend((0..len).map(|i| {
            let alpha = b"abcdefghijklmnopqrstuvwxyz";
            let alnum = b"abcdefghijklmnopqrstuvwxyz0123456789";
            let set: &[u8] = if i == 0 { alpha } else { alnum };
            set[rng.gen_range(0..set.len())] as char
        }));
        host.push('.');
    }
    host.push_str(TLDS[rng.gen_range(0..TLDS.len())]);
    let segs = rng.gen_range(0..6);
    let path: String = (0..segs)
        .map(|_| {
            let len = rng.gen_range(1..8);
            let s: String = (0..len)
                .map(|_| b"abcXYZ019_-~"[rng.gen_range(0..12)] as char)
                .collect();
            format!("/{s}")
        })
        .collect();
    let query = if rng.gen_bool(0.3) {
        format!("?q={}", rng.gen_range(0..1000))
    } else {
        String::new()
    };
    (scheme.into(), host, path, query)
}

fn criterion_1() -> Outcome {
    for u in [
        "http://www.example.com",
        "http://www.example.com:80",
        "www.EXAMPLE.com",
    ] {
        let key = canonical::surt(u).map_err(|e| e.to_string())?;
        ensure!(key == "com,example)/", "{u} -> {key}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let (s, h, p, q) = random_uri(&mut rng);
        let uri = format!("{s}://{h}{p}{q}");
        let key = canonical::surt(&uri).map_err(|e| format!("{uri}: {e}"))?;
        let back =
            canonical::surt_to_uri(&key).ok_or_else(|| format!("{key} not reconstructible"))?;
        ensure!(
            canonical::surt(&back).unwrap() == key,
            "surt not idempotent on {uri}"
        );
        let n = canonical::normalize(&uri).unwrap();
        ensure!(
            canonical::normalize(&n).unwrap() == n,
            "normalize not idempotent on {uri}"
        );
        let port = if s == "http" { 80 } else { 443 };
        ensure!(
            canonical::surt(&format!("{s}://{h}:{port}{p}{q}")).unwrap() == key,
            "port changes {uri}"
        );
        ensure!(
            canonical::surt(&format!("{s}://{}{p}{q}", h.to_ascii_uppercase())).unwrap() == key,
            "case changes {uri}"
        );
    }
    Ok("3 example.com spellings, 10000 random URIs".into())
}

fn criterion_2() -> Outcome {
    let store = FixtureStore::load_dir(&core_fixture("redirects")).map_err(|e| e.to_string())?;
    let t = ReplayTransport::new(Arc::new(store));
    for start in ["http://www.fb.com", "http://facebook.com"] {
        let chain = resolve_redirects(&t, start, DEFAULT_MAX_HOPS).map_err(|e| e.to_string())?;
        ensure!(
            chain.final_uri == "https://www.facebook.com/",
            "{start} -> {}",
            chain.final_uri
        );
    }
    ensure!(
        same_resource(
            &t,
            "http://www.fb.com",
            "http://facebook.com",
            DEFAULT_MAX_HOPS
        )
        .map_err(|e| e.to_string())?,
        "same_resource returned false"
    );
    Ok("both hosts reach https://www.facebook.com/".into())
}

fn criterion_3() -> Outcome {
    let registry = Registry::builtin();
    let urir = "http://www.futureofmusic.org/about/positions.cfm";
    let full = String::from_utf8(read_core("futureofmusic_timemap.txt")).unwrap();
    let expected = String::from_utf8(read_core("futureofmusic_filtered.txt")).unwrap();
    let record =
        parse_compact(&full, urir, &registry, Provenance::Aggregator).map_err(|e| e.to_string())?;
    let filtered = yearly_first_filter(record);
    ensure!(
        serialize_compact(&filtered) == expected,
        "filtered listing differs from the ten-line file"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1_000 {
        let record = oracle::random_timemap(&mut rng, 500);
        let out = yearly_first_filter(record.clone());
        ensure!(
            oracle::flatten(&out) == oracle::yearly(&record),
            "case {case}: differs from group-by-min"
        );
        ensure!(
            yearly_first_filter(out.clone()) == out,
            "case {case}: not idempotent"
        );
    }
    Ok("recorded listing byte-exact, 1000 random TimeMaps".into())
}

fn criterion_4() -> Outcome {
    let registry = Registry::builtin();
    let parser = TimeMapParser::new(&registry);
    let mut counts = Vec::new();
    for (name, expect) in [("cnn_timemap.link", 3), ("perma_whitehouse.link", 57)] {
        let record = parser
            .parse(&read_core(name), None)
            .map_err(|e| e.to_string())?;
        ensure!(
            record.mementos.len() == expect,
            "{name}: {} mementos",
            record.mementos.len()
        );
        counts.push(record.mementos.len());
    }
    for name in [
        "cnn_timemap.link",
        "inria_timemap.link",
        "perma_whitehouse.link",
    ] {
        let record = parser
            .parse(&read_core(name), None)
            .map_err(|e| e.to_string())?;
        let text = serialize_compact(&record);
        let back = parse_compact(&text, &record.urir, &registry, record.provenance)
            .map_err(|e| e.to_string())?;
        ensure!(
            back.mementos == record.mementos,
            "{name}: compact round trip changed mementos"
        );
    }
    for name in ["futureofmusic_timemap.txt", "futureofmusic_filtered.txt"] {
        let text = String::from_utf8(read_core(name)).unwrap();
        let record = parse_compact(
            &text,
            "http://www.futureofmusic.org/about/positions.cfm",
            &registry,
            Provenance::Aggregator,
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            serialize_compact(&record) == text,
            "{name}: compact round trip not exact"
        );
    }
    Ok(format!(
        "{} and {} mementos, 5 round trips",
        counts[0], counts[1]
    ))
}

fn criterion_5() -> Outcome {
    const QUOTA: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2018);
    let (stream, world) = world::generate(&mut rng, 500);
    let server = FixtureServer::start(Arc::new(world.fixtures())).map_err(|e| e.to_string())?;
    let client = ArchiveClient::new(
        proxied(&server),
        Arc::new(Registry::builtin()),
        FetchPolicy::immediate(),
    );

    let expect = world::oracle_select(&stream, &world, QUOTA, 5 * QUOTA);
    let mut state =
        mementos::discovery::SelectionState::new(QUOTA, canonical::DomainKeyMode::Registrable);
    let opts = mementos::discovery::SelectOptions {
        target: 5 * QUOTA,
        lookahead: 32,
        ..Default::default()
    };
    let outcome = mementos::discovery::select_initial(&stream, &opts, &mut state, &client);
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for v in &outcome.verdicts {
        *tally.entry(format!("{v:?}")).or_default() += 1;
    }
    let got: Vec<String> = state
        .selected
        .iter()
        .map(|s| canonical::surt(&s.resource.uri).unwrap())
        .collect();
    ensure!(
        got == expect.accepted,
        "selection differs: {} vs {} accepted",
        got.len(),
        expect.accepted.len()
    );
    let feasible = expect.per_bucket.iter().all(|n| *n == QUOTA);
    ensure!(
        feasible,
        "stream cannot fill every bucket: {:?}",
        expect.per_bucket
    );
    for b in mementos::model::PathBucket::ALL {
        ensure!(
            state.bucket_count(b) == QUOTA,
            "bucket {} has {}",
            b.label(),
            state.bucket_count(b)
        );
    }

    // A prefix too short to fill the buckets must agree as well.
    let short = &stream[..120];
    let expect = world::oracle_select(short, &world, QUOTA, 5 * QUOTA);
    let mut state =
        mementos::discovery::SelectionState::new(QUOTA, canonical::DomainKeyMode::Registrable);
    mementos::discovery::select_initial(short, &opts, &mut state, &client);
    let counts: Vec<usize> = mementos::model::PathBucket::ALL
        .iter()
        .map(|b| state.bucket_count(*b))
        .collect();
    ensure!(
        counts == expect.per_bucket,
        "prefix bucket counts {counts:?} vs {:?}",
        expect.per_bucket
    );
    ensure!(tally.len() == 7, "not every verdict occurred: {tally:?}");
    Ok(format!("500 URIs, verdicts {tally:?}"))
}

fn criterion_6() -> Outcome {
    let ms = oracle::dataset_selection(18_472, 1_975);
    let kept = prune_non_archival(&ms.0, &ms.1, 130);
    ensure!(kept.len() == 16_627, "kept {}", kept.len());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..200 {
        let (ms, allowed) = oracle::small_cap_instance(&mut rng);
        let budgets = BTreeMap::from([(ArchiveId::new("a.org"), allowed)]);
        let kept = cap_mementos(&ms, &budgets, rng.gen());
        let k = allowed.min(ms.len());
        ensure!(
            kept.len() == k,
            "cap case {case}: kept {} of allowed {k}",
            kept.len()
        );
        ensure!(
            oracle::is_subsequence(&kept, &ms),
            "cap case {case}: not a subsequence"
        );
        ensure!(
            oracle::coverage(&kept) == oracle::best_coverage(&ms, k),
            "cap case {case}: coverage not optimal"
        );
    }
    let archive = ArchiveId::new("a.org");
    for case in 0..500 {
        let n = rng.gen_range(1..=25);
        let probe: Vec<Duration> = (0..n)
            .map(|_| Duration::from_millis(rng.gen_range(0..400_000)))
            .collect();
        let constraints = SelectionConstraints {
            max_urims_per_archive: rng.gen_range(1..=2_000),
            download_budget: Duration::from_secs(rng.gen_range(1..=200_000)),
            ..SelectionConstraints::default()
        };
        let b = estimate_budget(&archive, &probe, &constraints).map_err(|e| e.to_string())?;
        let expect = oracle::budget(
            &probe,
            constraints.download_budget,
            constraints.max_urims_per_archive,
        );
        ensure!(
            b.allowed_count == expect,
            "budget case {case}: {} vs {expect}",
            b.allowed_count
        );
    }
    Ok("16627 kept, 200 cap and 500 budget instances".into())
}

fn criterion_7() -> Outcome {
    let published = dataset::Published::load();
    let manifest = dataset::manifest(&published, &Registry::builtin());
    let reports = mementos_cli::cmd::stats::build(&manifest, None).map_err(|e| format!("{e:#}"))?;
    ensure!(
        reports.get("urims-per-year.csv") == Some(published.per_year.as_str()),
        "per-year table differs"
    );
    ensure!(
        reports.get("archive-totals.csv") == Some(published.totals.as_str()),
        "per-archive totals differ"
    );
    ensure!(
        reports.summary.unique_urirs == 3_698,
        "unique URI-Rs {}",
        reports.summary.unique_urirs
    );
    let s0 = reports.summary.path_histogram[0];
    ensure!(s0 == 1_996, "s0 URI-Rs {s0}");
    let row = |name: &str| {
        reports
            .get("archive-totals.csv")
            .and_then(|t| t.lines().find(|l| l.starts_with(&format!("{name},"))))
            .map(str::to_string)
    };
    ensure!(
        row("web.archive.org").as_deref() == Some("web.archive.org,1566,1566"),
        "web.archive.org row"
    );
    ensure!(
        row("perma.cc").as_deref() == Some("perma.cc,175,182"),
        "perma.cc row"
    );
    Ok("17 archive rows and totals exact, 3698 URI-Rs, 1996 at s0".into())
}

fn criterion_8() -> Outcome {
    const PER: usize = 4;
    const INTERVAL: Duration = Duration::from_millis(150);
    let registry = Registry::builtin();
    ensure!(
        registry.len() == 17,
        "registry has {} archives",
        registry.len()
    );
    let store = FixtureStore::new();
    let mut jobs = Vec::new();
    for a in registry.archives() {
        let host = a.patterns().next().unwrap().to_string();
        for i in 0..PER {
            let uri = format!("http://{host}/web/2010010100000{i}/http://example.com/{i}");
            store.add_delayed(
                Method::Get,
                &uri,
                200,
                Headers::new(),
                "ok",
                Duration::from_millis(30),
            );
            jobs.push((a.id.to_string(), uri));
        }
    }
    let server = FixtureServer::start(Arc::new(store)).map_err(|e| e.to_string())?;
    let policy = FetchPolicy {
        per_archive_concurrency: 1,
        min_request_interval: INTERVAL,
        retries: 0,
        ..FetchPolicy::default()
    };
    let client = ArchiveClient::new(proxied(&server), Arc::new(registry.clone()), policy);
    let results = client.run_lanes(jobs, |c, uri| {
        c.send(&c.lane_of(&uri), &HttpRequest::get(uri))
            .map(|r| r.status)
    });
    ensure!(
        results.iter().all(|r| matches!(r, Ok(200))),
        "a request failed"
    );
    let mut per_host: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for r in server.log() {
        per_host.entry(r.host.clone()).or_default().push(r);
    }
    ensure!(per_host.len() == 17, "{} hosts seen", per_host.len());
    let mut min_gap = Duration::MAX;
    for (host, mut reqs) in per_host {
        reqs.sort_by_key(|r| r.received);
        for w in reqs.windows(2) {
            ensure!(
                w[1].received >= w[0].finished,
                "{host}: two requests in flight"
            );
            let gap = w[1].received - w[0].finished;
            ensure!(gap >= INTERVAL, "{host}: gap {gap:?}");
            min_gap = min_gap.min(gap);
        }
    }
    Ok(format!(
        "17 archives, smallest gap {} ms",
        min_gap.as_millis()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "SURT correctness",
            Some(Duration::from_secs(5)),
            criterion_1,
        ),
        (
            "redirect unification",
            Some(Duration::from_secs(1)),
            criterion_2,
        ),
        ("yearly filter", Some(Duration::from_secs(10)), criterion_3),
        ("link-format parsing", None, criterion_4),
        (
            "selection conditions",
            Some(Duration::from_secs(30)),
            criterion_5,
        ),
        ("sampler arithmetic", None, criterion_6),
        ("reports", None, criterion_7),
        ("politeness", None, criterion_8),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if elapsed >= l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (o, _) => o,
        };
        let limit = limit.map_or(String::new(), |l| format!(" < {l:?}"));
        match outcome {
            Ok(detail) => println!(
                "criterion {} {name}: PASS ({detail}; {elapsed:.2?}{limit})",
                i + 1
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "criterion {} {name}: FAIL ({why}; {elapsed:.2?}{limit})",
                    i + 1
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
