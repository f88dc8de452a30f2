use std::fs::OpenOptions;
use std::io::Write;
use std::time::{Duration, Instant};

use serde_json::json;

use sempubsub_broker::{Broker, BrokerConfig, BrokerError, Mode, Transport, WebhookPolicy, LOG_FILE};
use sempubsub_core::{demo, Event, StageRecord};

fn broker(config: BrokerConfig) -> Broker {
    Broker::open(config, demo::jobfinder_ontology()).unwrap()
}

fn config() -> BrokerConfig {
    BrokerConfig::new(demo::DEMO_YEAR)
}

fn with_clients(b: &Broker) {
    b.register_client(Some("recruiter".into()), "Acme", Transport::Queue).unwrap();
    b.register_client(Some("candidate".into()), "Jane", Transport::Queue).unwrap();
}

#[test]
fn recruiter_matches_candidate_only_semantically() {
    let b = broker(config());
    with_clients(&b);
    let sub_id = b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    assert_eq!(sub_id, "recruiter-s");

    let receipt = b.publish_event("candidate", demo::candidate_event()).unwrap();
    assert_eq!(receipt.matched_count, 1);
    let got = b.drain("recruiter").unwrap();
    assert_eq!(got.len(), 1);
    let n = &got[0];
    assert_eq!((n.event_id.as_str(), n.sub_id.as_str()), ("candidate-e", "recruiter-s"));
    assert_eq!((n.subscriber.as_str(), n.publisher.as_str()), ("recruiter", "candidate"));
    assert_eq!(n.dedupe_key, "candidate-e/recruiter-s");
    assert!(n.trace.iter().any(|r| matches!(r, StageRecord::Mapping { function } if function == "prof_exp_from_grad")));
    assert!(n.trace.iter().any(|r| matches!(r, StageRecord::Synonym { .. })));

    b.set_mode(Mode::Syntactic);
    let mut e = demo::candidate_event();
    e.event_id = "candidate-e2".into();
    assert_eq!(b.publish_event("candidate", e).unwrap().matched_count, 0);
    assert!(b.drain("recruiter").unwrap().is_empty());
}

#[test]
fn two_jobs_resume_derives_ten_years() {
    let b = broker(config());
    with_clients(&b);
    b.subscribe_parsed("recruiter", demo::experience_subscription()).unwrap();
    assert_eq!(b.publish_event("candidate", demo::two_jobs_event()).unwrap().matched_count, 1);
}

#[test]
fn syntactic_mode_is_literal() {
    let b = broker(config().with_mode(Mode::Syntactic));
    with_clients(&b);
    b.subscribe("recruiter", &json!({"sub_id": "lit", "predicates": [["school", "=", "Toronto"]]})).unwrap();
    b.subscribe("recruiter", &json!({"sub_id": "syn", "predicates": [["university", "=", "Toronto"]]})).unwrap();
    let ids: Vec<String> = b.match_event(&demo::candidate_event(), Mode::Syntactic).into_iter().map(|m| m.sub_id).collect();
    assert_eq!(ids, ["lit"]);
    let mut ids: Vec<String> = b.match_event(&demo::candidate_event(), Mode::Semantic).into_iter().map(|m| m.sub_id).collect();
    ids.sort();
    assert_eq!(ids, ["lit", "syn"]);
}

#[test]
fn subscription_precision_overrides_default() {
    let b = broker(config());
    with_clients(&b);
    let synonyms = json!({"stages": ["synonym"]});
    let mut recruiter = demo::recruiter_subscription().to_json();
    recruiter["precision"] = synonyms.clone();
    b.subscribe("recruiter", &recruiter).unwrap();
    b.subscribe(
        "recruiter",
        &json!({"sub_id": "no-mapping", "predicates": [["university", "=", "Toronto"], ["degree", "=", "doctorate"]], "precision": synonyms}),
    )
    .unwrap();
    b.subscribe(
        "recruiter",
        &json!({"sub_id": "literal", "predicates": [["university", "=", "Toronto"]], "precision": {"stages": []}}),
    )
    .unwrap();
    let ids: Vec<String> = b.match_event(&demo::candidate_event(), Mode::Semantic).into_iter().map(|m| m.sub_id).collect();
    assert_eq!(ids, ["no-mapping"]);
}

#[test]
fn subscription_may_ask_for_more_than_default() {
    let b = broker(config().with_default_precision(sempubsub_core::PrecisionConfig::synonyms_only()));
    with_clients(&b);
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    assert_eq!(b.publish_event("candidate", demo::candidate_event()).unwrap().matched_count, 0);

    let mut wide = demo::recruiter_subscription().to_json();
    wide["sub_id"] = json!("wide");
    wide["precision"] = json!({"stages": ["synonym", "hierarchy", "mapping"]});
    b.subscribe("recruiter", &wide).unwrap();
    let ids: Vec<String> = b.match_event(&demo::candidate_event(), Mode::Semantic).into_iter().map(|m| m.sub_id).collect();
    assert_eq!(ids, ["wide"]);
}

#[test]
fn request_errors() {
    let b = broker(config());
    with_clients(&b);
    assert!(matches!(b.subscribe_parsed("ghost", demo::recruiter_subscription()), Err(BrokerError::UnknownClient(_))));
    assert!(matches!(b.publish_event("ghost", demo::candidate_event()), Err(BrokerError::UnknownClient(_))));
    assert!(matches!(b.drain("ghost"), Err(BrokerError::UnknownClient(_))));
    assert!(matches!(
        b.subscribe("recruiter", &json!({"predicates": [["degree", "≈", "PhD"]]})),
        Err(BrokerError::Parse(_))
    ));
    assert!(matches!(b.publish("candidate", &json!({"pairs": []})), Err(BrokerError::Parse(_))));
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    assert!(matches!(
        b.subscribe_parsed("candidate", demo::recruiter_subscription()),
        Err(BrokerError::DuplicateSubscription(_))
    ));
    assert!(matches!(
        b.register_client(Some("recruiter".into()), "again", Transport::Queue),
        Err(BrokerError::DuplicateClient(_))
    ));
    assert!(matches!(b.unsubscribe("nope"), Err(BrokerError::UnknownSubscription(_))));
}

#[test]
fn generated_ids_and_empty_store() {
    let b = broker(config());
    with_clients(&b);
    let id = b.subscribe("recruiter", &json!({"predicates": [["degree", "=", "PhD"]]})).unwrap();
    assert!(!id.is_empty());
    b.unsubscribe(&id).unwrap();
    let receipt = b.publish("candidate", &json!({"pairs": [["degree", "PhD"]]})).unwrap();
    assert_eq!(receipt.matched_count, 0);
    assert!(!receipt.event_id.is_empty());
}

#[test]
fn one_notification_per_event_and_subscription() {
    let b = broker(config());
    with_clients(&b);
    b.subscribe("recruiter", &json!({"sub_id": "any-school", "predicates": [["university", "=", "Toronto"]]})).unwrap();
    // Several pairs satisfy the only predicate.
    let e = json!({"event_id": "dup", "pairs": [["school", "Toronto"], ["college", "Toronto"], ["university", "Toronto"]]});
    assert_eq!(b.publish("candidate", &e).unwrap().matched_count, 1);
    assert_eq!(b.publish("candidate", &e).unwrap().matched_count, 1);
    assert_eq!(b.drain("recruiter").unwrap().len(), 1);
    assert_eq!(b.status().notifications, 1);
}

#[test]
fn mode_switch_is_not_retroactive() {
    let b = broker(config());
    with_clients(&b);
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    b.publish_event("candidate", demo::candidate_event()).unwrap();
    b.set_mode(Mode::Syntactic);
    assert_eq!(b.status().mode, Mode::Syntactic);
    assert_eq!(b.drain("recruiter").unwrap().len(), 1);
}

#[test]
fn status_counts() {
    let b = broker(config());
    with_clients(&b);
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    b.subscribe_parsed("recruiter", demo::experience_subscription()).unwrap();
    b.publish_event("candidate", demo::candidate_event()).unwrap();
    let s = b.status();
    assert_eq!((s.clients, s.subscriptions, s.events, s.queued), (2, 2, 1, 2));
    assert_eq!(s.ontology_digest, demo::jobfinder_ontology().digest());
    assert_eq!(s.current_year, 2003);
}

fn sub_doc(i: usize) -> serde_json::Value {
    json!({"sub_id": format!("s{i}"), "predicates": [["university", "=", "Toronto"], ["graduation year", "<=", 1990 + i]]})
}

fn matches(b: &Broker, e: &Event) -> Vec<String> {
    let mut ids: Vec<String> = b.match_event(e, Mode::Semantic).into_iter().map(|m| m.sub_id).collect();
    ids.sort();
    ids
}

#[test]
fn restart_recovers_store_and_queues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config().with_data_dir(dir.path());
    let probe = demo::candidate_event();
    let before = {
        let b = broker(cfg.clone());
        with_clients(&b);
        for i in 0..5 {
            b.subscribe("recruiter", &sub_doc(i)).unwrap();
        }
        b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
        b.unsubscribe("recruiter-s").unwrap();
        b.publish("candidate", &json!({"event_id": "a", "pairs": [["school", "Toronto"], ["graduation year", 1991]]})).unwrap();
        assert_eq!(b.drain("recruiter").unwrap().len(), 4);
        b.publish("candidate", &json!({"event_id": "b", "pairs": [["school", "Toronto"], ["graduation year", 1993]]})).unwrap();
        matches(&b, &probe)
    };
    assert_eq!(before.len(), 5);

    let b = broker(cfg);
    let s = b.status();
    assert_eq!((s.clients, s.subscriptions, s.corrupt_log_entries), (2, 5, 0));
    assert_eq!(matches(&b, &probe), before);
    let pending: Vec<String> = b.drain("recruiter").unwrap().into_iter().map(|n| n.dedupe_key).collect();
    assert_eq!(pending, ["b/s3", "b/s4"]);
    // Already-notified pairs stay deduplicated across the restart.
    b.publish("candidate", &json!({"event_id": "a", "pairs": [["school", "Toronto"], ["graduation year", 1991]]})).unwrap();
    assert!(b.drain("recruiter").unwrap().is_empty());
}

#[test]
fn truncated_last_line_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config().with_data_dir(dir.path());
    {
        let b = broker(cfg.clone());
        with_clients(&b);
        for i in 0..5 {
            b.subscribe("recruiter", &sub_doc(i)).unwrap();
        }
    }
    let path = dir.path().join(LOG_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 1 + 20;
    std::fs::write(&path, &text[..cut]).unwrap();
    {
        let b = broker(cfg.clone());
        let s = b.status();
        assert_eq!((s.subscriptions, s.corrupt_log_entries), (4, 1));
        b.subscribe("recruiter", &sub_doc(9)).unwrap();
    }
    let b = broker(cfg);
    assert_eq!(b.status().subscriptions, 5);
    assert!(b.subscription("s9").is_some());
}

#[test]
fn corrupt_lines_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config().with_data_dir(dir.path());
    {
        let b = broker(cfg.clone());
        with_clients(&b);
    }
    let mut f = OpenOptions::new().append(true).open(dir.path().join(LOG_FILE)).unwrap();
    writeln!(f, "not json").unwrap();
    writeln!(f, r#"{{"op":"unsubscribe","sub_id":"never-existed"}}"#).unwrap();
    drop(f);
    let b = broker(cfg);
    assert_eq!(b.status().corrupt_log_entries, 2);
    assert_eq!(b.status().clients, 2);
}

#[test]
fn empty_data_dir_starts_clean() {
    let dir = tempfile::tempdir().unwrap();
    let b = broker(config().with_data_dir(dir.path().join("fresh")));
    let s = b.status();
    assert_eq!((s.clients, s.subscriptions, s.corrupt_log_entries), (0, 0, 0));
}

#[tokio::test]
async fn stream_client_gets_live_and_backlog() {
    let b = broker(config());
    b.register_client(Some("recruiter".into()), "Acme", Transport::Stream).unwrap();
    b.register_client(Some("candidate".into()), "Jane", Transport::Queue).unwrap();
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();

    // No feed open yet: falls back to the queue, replayed on connect.
    b.publish_event("candidate", demo::candidate_event()).unwrap();
    let (backlog, mut rx) = b.open_stream("recruiter").unwrap();
    assert_eq!(backlog.len(), 1);
    assert_eq!(backlog[0].delivered_via, "queue");

    let mut e = demo::candidate_event();
    e.event_id = "live".into();
    b.publish_event("candidate", e).unwrap();
    let n = tokio::time::timeout(Duration::from_secs(1), rx.recv()).await.unwrap().unwrap();
    assert_eq!((n.event_id.as_str(), n.delivered_via.as_str()), ("live", "stream"));
    assert!(b.drain("recruiter").unwrap().is_empty());
    assert!(b.open_stream("candidate").is_err());
}

async fn wait_for(b: &Broker, dead: usize) -> Duration {
    let start = Instant::now();
    while b.status().pending_webhooks > 0 || b.dead_letters().len() < dead {
        assert!(start.elapsed() < Duration::from_secs(10), "webhook delivery did not settle");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    start.elapsed()
}

fn fast_policy() -> WebhookPolicy {
    WebhookPolicy { attempts: 3, base_delay: Duration::from_millis(20), timeout: Duration::from_secs(1) }
}

#[tokio::test]
async fn refused_webhook_is_dead_lettered() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let b = broker(config().with_webhook_policy(fast_policy()));
    b.register_client(Some("recruiter".into()), "Acme", Transport::webhook(&format!("http://127.0.0.1:{port}/hook")).unwrap())
        .unwrap();
    b.register_client(Some("candidate".into()), "Jane", Transport::Queue).unwrap();
    b.subscribe_parsed("recruiter", demo::recruiter_subscription()).unwrap();
    assert_eq!(b.publish_event("candidate", demo::candidate_event()).unwrap().matched_count, 1);
    let waited = wait_for(&b, 1).await;
    // Backoff of 20ms then 40ms between the three attempts.
    assert!(waited >= Duration::from_millis(60), "{waited:?}");
    let dead = b.dead_letters();
    assert_eq!(dead.len(), 1);
    assert_eq!(dead[0].attempts, 3);
    assert_eq!(dead[0].notification.dedupe_key, "candidate-e/recruiter-s");
}
