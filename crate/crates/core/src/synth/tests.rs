use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::analytics::{
    longest_fixation, pronoun_cooccurrence, query_window, startup_stats, startup_time, startup_times, WINDOW_LEAD_S,
};
use crate::session::load_session;

fn small(seed: u64) -> SynthConfig {
    SynthConfig { query_count: 15, seed, ..SynthConfig::default() }
}

#[test]
fn forced_cooccurrence() {
    let cfg = SynthConfig {
        pronoun_cooccurrence_rate: 1.0,
        wander_rate: 0.0,
        pronoun_rate: 0.5,
        query_count: 40,
        ..SynthConfig::default()
    };
    let (s, _) = generate(&cfg).unwrap();
    let pronouns: usize = s.queries.iter().map(|q| q.pronoun_indices().count()).sum();
    assert!(pronouns > 0);
    let prof = pronoun_cooccurrence(std::slice::from_ref(&s), 5);
    let row = prof.at(0).unwrap();
    assert_eq!(row.c, pronouns);
    assert_eq!(row.p, Some(1.0));
}

#[test]
fn degenerate_startup() {
    let cfg = SynthConfig { startup_spread: 0.0, startup_mean: 5.0, ..small(3) };
    let (s, _) = generate(&cfg).unwrap();
    for (_, r) in startup_times(std::slice::from_ref(&s), STARTUP_CAP_S) {
        assert_eq!(r.startup, Some(5.0));
    }
}

#[test]
fn lognormal_family_stays_in_range() {
    let cfg = SynthConfig { startup_family: StartupFamily::LogNormal, query_count: 200, ..small(9) };
    let (s, oracle) = generate_with_oracle(&cfg).unwrap();
    let stats = startup_stats(startup_times(std::slice::from_ref(&s), STARTUP_CAP_S).iter().map(|(_, r)| r)).unwrap();
    assert_eq!(stats.defined, 200);
    assert!(oracle.queries.iter().all(|q| q.startup_offset > 0.0 && q.startup_offset <= 20.0));
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_synth(&small(11), a.path()).unwrap();
    write_synth(&small(11), b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
    let c = tempfile::tempdir().unwrap();
    write_synth(&small(12), c.path()).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("fixations.csv")).unwrap(),
        std::fs::read(c.path().join("fixations.csv")).unwrap()
    );
}

#[test]
fn written_sessions_validate_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(5);
    write_synth(&cfg, dir.path()).unwrap();
    let loaded = load_session(dir.path()).unwrap();
    let (orig, _) = generate(&cfg).unwrap();
    assert_eq!(loaded.fixations, orig.fixations);
    assert_eq!(loaded.queries, orig.queries);
    assert_eq!(loaded.labels, orig.labels);
    assert!(plant_oracle(&cfg, &loaded).is_ok());
}

#[test]
fn oracle_rejects_other_seed() {
    let (s, _) = generate(&small(1)).unwrap();
    assert!(matches!(plant_oracle(&small(2), &s), Err(SynthError::SeedMismatch)));
}

#[test]
fn invalid_configs() {
    for cfg in [
        SynthConfig { wander_rate: 1.5, ..SynthConfig::default() },
        SynthConfig { relevant_duration_mean: 0.0, ..SynthConfig::default() },
        SynthConfig { startup_mean: 25.0, ..SynthConfig::default() },
        SynthConfig { words_per_query: (5, 2), ..SynthConfig::default() },
    ] {
        assert!(matches!(generate(&cfg), Err(SynthError::Config(_))));
    }
    assert!(toml::from_str::<SynthConfig>("bogus = 1").is_err());
    let cfg: SynthConfig = toml::from_str("query_count = 3\nwords_per_query = [2, 3]\n").unwrap();
    assert_eq!(cfg.words_per_query, (2, 3));
}

#[test]
fn analytics_match_oracle_on_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let lo = rng.random_range(1..6);
        let cfg = SynthConfig {
            query_count: rng.random_range(1..8),
            words_per_query: (lo, lo + rng.random_range(0..10)),
            pronoun_rate: rng.random_range(0.0..=1.0),
            startup_mean: rng.random_range(0.5..15.0),
            startup_spread: rng.random_range(0.0..5.0),
            pronoun_cooccurrence_rate: rng.random_range(0.0..=1.0),
            relevant_duration_mean: rng.random_range(0.1..2.0),
            irrelevant_duration_mean: rng.random_range(0.1..2.0),
            wander_rate: rng.random_range(0.0..=1.0),
            seed: i,
            ..SynthConfig::default()
        };
        let (s, _) = generate(&cfg).unwrap();
        let oracle = plant_oracle(&cfg, &s).unwrap();
        let labels = s.labels.as_ref().unwrap();
        for (query, pq) in s.queries.iter().zip(&oracle.queries) {
            let st = startup_time(query, &s.fixations, labels, STARTUP_CAP_S);
            assert_eq!(st.startup, Some(pq.startup_offset), "cfg {i} {}", pq.query_id);
            assert_eq!(st.source_fixation.as_ref().map(|f| f.as_str()), Some(pq.startup_fixation.as_str()));
            let win = query_window(query, &s.fixations, WINDOW_LEAD_S);
            assert_eq!(win.len(), s.fixations.iter().filter(|f| labels.get(&query.id, &f.id).is_some()).count());
            let lr = longest_fixation(query, win, labels, true).unwrap().unwrap();
            assert_eq!(lr.id.as_str(), pq.longest_relevant);
            let li = longest_fixation(query, win, labels, false).unwrap();
            assert_eq!(li.map(|f| f.id.to_string()), pq.longest_irrelevant);
        }
        let prof = pronoun_cooccurrence(std::slice::from_ref(&s), 5);
        for (r, (c, c_all)) in oracle.cooccurrence(5) {
            let row = prof.at(r).unwrap();
            assert_eq!((row.c, row.c_all), (c, c_all), "cfg {i} r {r}");
        }
    }
}
