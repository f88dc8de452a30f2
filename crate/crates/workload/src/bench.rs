//! Indexed matching against the nested-loop oracle on one generated store.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use sempubsub_core::{
    expand_event, normalize_subscription, oracle_match, ExpandedEvent, Ontology, PrecisionConfig, PredicateIndex,
};

use crate::generate::generate;
use crate::spec::DomainSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub subscriptions: usize,
    pub events: usize,
    pub mode: String,
    /// `index` or `oracle`.
    pub matcher: String,
    pub median_match_micros: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub rows: Vec<BenchRow>,
    /// Events where the two matchers disagreed; any value but 0 is a bug.
    pub mismatches: usize,
    pub matched_total: usize,
}

impl BenchRun {
    pub fn median(&self, mode: &str, matcher: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.mode == mode && r.matcher == matcher).map(|r| r.median_match_micros)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}

/// Times only the match step: both matchers see the same expanded events.
pub fn bench(
    spec: &DomainSpec,
    ontology: &Ontology,
    seed: u64,
    n_subs: usize,
    n_events: usize,
    current_year: i32,
    semantic: bool,
) -> BenchRun {
    let w = generate(seed, n_subs, n_events, spec);
    let (precision, subs) = if semantic {
        (PrecisionConfig::semantic(), w.subscriptions.iter().map(|s| normalize_subscription(s, ontology)).collect())
    } else {
        (PrecisionConfig::syntactic(), w.subscriptions.clone())
    };
    let mut index = PredicateIndex::with_default_precision(current_year, precision);
    for s in &subs {
        index.add_subscription(s.clone()).expect("generated ids are unique");
    }

    let events: Vec<ExpandedEvent> = w
        .publications
        .iter()
        .map(|e| if semantic { expand_event(e, ontology, &precision, current_year) } else { ExpandedEvent::verbatim(e) })
        .collect();
    // Separate passes, so neither matcher runs on caches the other evicted.
    let mut indexed = Vec::with_capacity(n_events);
    let mut got = Vec::with_capacity(n_events);
    for x in &events {
        let t = Instant::now();
        let ids = index.matching_ids(x);
        indexed.push(t.elapsed().as_secs_f64() * 1e6);
        got.push(ids);
    }
    let mut oracle = Vec::with_capacity(n_events);
    let mut mismatches = 0;
    for (x, ids) in events.iter().zip(&got) {
        let t = Instant::now();
        let expected = oracle_match(&subs, x, &precision, current_year);
        oracle.push(t.elapsed().as_secs_f64() * 1e6);
        mismatches += usize::from(*ids != expected);
    }
    let matched_total = got.iter().map(|ids| ids.len()).sum();

    let mode = if semantic { "semantic" } else { "syntactic" };
    let row = |matcher: &str, xs: Vec<f64>| BenchRow {
        subscriptions: n_subs,
        events: n_events,
        mode: mode.into(),
        matcher: matcher.into(),
        median_match_micros: median(xs),
    };
    BenchRun { rows: vec![row("index", indexed), row("oracle", oracle)], mismatches, matched_total }
}

pub fn write_csv(path: &Path, rows: &[BenchRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
