use std::process::Command;

use sempubsub_core::demo;
use sempubsub_workload::bench::{bench, BenchRow};
use sempubsub_workload::DomainSpec;

#[test]
fn small_runs_agree_with_the_oracle() {
    for spec in [DomainSpec::jobfinder(), DomainSpec::bench_catalogue()] {
        for semantic in [false, true] {
            let run = bench(&spec, &demo::jobfinder_ontology(), 3, 300, 60, demo::DEMO_YEAR, semantic);
            assert_eq!(run.mismatches, 0);
            assert_eq!(run.rows.len(), 2);
            assert!(run.rows.iter().all(|r| r.subscriptions == 300 && r.events == 60 && r.median_match_micros > 0.0));
        }
    }
    let run = bench(&DomainSpec::jobfinder(), &demo::jobfinder_ontology(), 3, 300, 60, demo::DEMO_YEAR, true);
    assert!(run.matched_total > 0);
    assert!(run.median("semantic", "index").is_some());
    assert!(run.median("syntactic", "index").is_none());
}

#[test]
fn cli_writes_both_modes_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_workload"))
        .args(["bench", "--subs", "200", "--events", "20", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["subscriptions", "events", "mode", "matcher", "median_match_micros"]
    );
    let rows: Vec<BenchRow> = reader.deserialize().map(Result::unwrap).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r.mode.as_str(), r.matcher.as_str())).collect();
    assert_eq!(keys, [("syntactic", "index"), ("syntactic", "oracle"), ("semantic", "index"), ("semantic", "oracle")]);
}
