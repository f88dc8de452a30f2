//! Replays generated streams against a running broker over HTTP.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::generate::Streams;

#[derive(Clone, Debug)]
pub struct DriveOptions {
    pub broker: String,
    /// Requests per second across all sessions; 0 means as fast as possible.
    pub rate: f64,
    /// Concurrent sessions. Each registers one company and one candidate.
    pub concurrency: usize,
    /// Extra attempts after a connection failure.
    pub max_retries: u32,
    pub retry_backoff: Duration,
    pub timeout: Duration,
}

impl DriveOptions {
    pub fn new(broker: impl Into<String>) -> Self {
        DriveOptions {
            broker: broker.into().trim_end_matches('/').to_string(),
            rate: 0.0,
            concurrency: 4,
            max_retries: 3,
            retry_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DriveError {
    #[error("broker unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("client registration rejected: HTTP {status}: {body}")]
    Registration { status: u16, body: String },
    #[error("concurrency must be at least 1")]
    NoSessions,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub sent: usize,
    pub accepted: usize,
    /// Answered with a 4xx or 5xx status.
    pub rejected: usize,
    /// Never answered, even after retries.
    pub failed: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencySummary {
    fn of(mut micros: Vec<u64>) -> Self {
        if micros.is_empty() {
            return LatencySummary::default();
        }
        micros.sort_unstable();
        let at = |q: f64| micros[((micros.len() - 1) as f64 * q).round() as usize];
        LatencySummary { count: micros.len(), p50: at(0.5), p90: at(0.9), p99: at(0.99), max: *micros.last().unwrap() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub subscribe: LatencySummary,
    pub publish: LatencySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub broker: String,
    pub mode: String,
    pub rate: f64,
    pub concurrency: usize,
    pub subscriptions: PhaseCounts,
    pub publications: PhaseCounts,
    pub matched_total: u64,
    pub retries: u64,
    pub connection_failures: u64,
    pub duration_secs: f64,
    pub latency_micros: LatencyReport,
}

/// One row of the per-request CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub kind: String,
    pub index: usize,
    /// HTTP status, or 0 when no response arrived.
    pub status: u16,
    pub attempts: u32,
    pub latency_micros: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Subscribe,
    Publish,
}

struct Outcome {
    status: u16,
    attempts: u32,
    body: Json,
}

struct Driver {
    opts: DriveOptions,
    http: reqwest::Client,
    start: Instant,
    slot: AtomicUsize,
}

impl Driver {
    /// Waits for this request's turn under the global rate schedule.
    async fn pace(&self) {
        let slot = self.slot.fetch_add(1, Ordering::SeqCst);
        if self.opts.rate > 0.0 {
            let due = self.start + Duration::from_secs_f64(slot as f64 / self.opts.rate);
            tokio::time::sleep_until(due.into()).await;
        }
    }

    async fn send(&self, method: reqwest::Method, path: &str, body: Option<&Json>) -> Outcome {
        let url = format!("{}{path}", self.opts.broker);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut req = self.http.request(method.clone(), &url).timeout(self.opts.timeout);
            if let Some(b) = body {
                req = req.json(b);
            }
            match req.send().await {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.json().await.unwrap_or(Json::Null);
                    return Outcome { status, attempts, body };
                }
                Err(e) if attempts <= self.opts.max_retries => {
                    log::debug!("{url}: {e}; retrying");
                    tokio::time::sleep(self.opts.retry_backoff * attempts).await;
                }
                Err(e) => {
                    log::warn!("{url}: giving up after {attempts} attempts: {e}");
                    return Outcome { status: 0, attempts, body: Json::Null };
                }
            }
        }
    }

    async fn register(&self, name: String) -> Result<String, DriveError> {
        let out = self.send(reqwest::Method::POST, "/clients", Some(&json!({"name": name, "transport": "queue"}))).await;
        match (out.status, out.body["client_id"].as_str()) {
            (201, Some(id)) => Ok(id.to_string()),
            (0, _) => Err(DriveError::Unreachable { url: self.opts.broker.clone(), message: "no response".into() }),
            (status, _) => Err(DriveError::Registration { status, body: out.body.to_string() }),
        }
    }
}

#[derive(Default)]
struct Tally {
    records: Vec<RequestRecord>,
    matched_total: u64,
    subs: PhaseCounts,
    pubs: PhaseCounts,
    retries: u64,
    connection_failures: u64,
}

impl Tally {
    fn note(&mut self, kind: Kind, index: usize, out: &Outcome, latency: Duration) {
        let counts = match kind {
            Kind::Subscribe => &mut self.subs,
            Kind::Publish => &mut self.pubs,
        };
        counts.sent += 1;
        match out.status {
            0 => counts.failed += 1,
            200..=299 => counts.accepted += 1,
            _ => counts.rejected += 1,
        }
        self.retries += u64::from(out.attempts - 1);
        self.connection_failures += u64::from(if out.status == 0 { out.attempts } else { out.attempts - 1 });
        if kind == Kind::Publish && (200..300).contains(&out.status) {
            self.matched_total += out.body["matched_count"].as_u64().unwrap_or(0);
        }
        self.records.push(RequestRecord {
            kind: match kind {
                Kind::Subscribe => "subscribe".into(),
                Kind::Publish => "publish".into(),
            },
            index,
            status: out.status,
            attempts: out.attempts,
            latency_micros: latency.as_micros() as u64,
        });
    }
}

async fn run_phase(
    driver: &Arc<Driver>,
    tally: &Arc<Mutex<Tally>>,
    kind: Kind,
    docs: Arc<Vec<Json>>,
    clients: Arc<Vec<String>>,
) {
    let next = Arc::new(AtomicUsize::new(0));
    let mut workers = Vec::new();
    for _ in 0..clients.len() {
        let (driver, tally, docs, clients, next) = (driver.clone(), tally.clone(), docs.clone(), clients.clone(), next.clone());
        workers.push(tokio::spawn(async move {
            loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(doc) = docs.get(i) else { break };
                let client_id = &clients[i % clients.len()];
                let (path, body) = match kind {
                    Kind::Subscribe => ("/subscriptions", json!({"client_id": client_id, "subscription": doc})),
                    Kind::Publish => ("/publications", json!({"client_id": client_id, "event": doc})),
                };
                driver.pace().await;
                let t0 = Instant::now();
                let out = driver.send(reqwest::Method::POST, path, Some(&body)).await;
                tally.lock().unwrap().note(kind, i, &out, t0.elapsed());
            }
        }));
    }
    for w in workers {
        w.await.expect("drive worker panicked");
    }
}

/// Registers `concurrency` companies and candidates, posts every
/// subscription, then every publication. Subscriptions are spread
/// round-robin over the companies and publications over the candidates.
pub async fn drive(opts: DriveOptions, streams: &Streams) -> Result<(RunReport, Vec<RequestRecord>), DriveError> {
    if opts.concurrency == 0 {
        return Err(DriveError::NoSessions);
    }
    let http = reqwest::Client::builder()
        .pool_max_idle_per_host(opts.concurrency)
        .build()
        .map_err(|e| DriveError::Unreachable { url: opts.broker.clone(), message: e.to_string() })?;
    let driver = Driver { opts: opts.clone(), http, start: Instant::now(), slot: AtomicUsize::new(0) };

    let status = driver.send(reqwest::Method::GET, "/status", None).await;
    if status.status != 200 {
        return Err(DriveError::Unreachable { url: opts.broker.clone(), message: format!("GET /status gave {}", status.status) });
    }
    let mode = status.body["mode"].as_str().unwrap_or("unknown").to_string();

    let mut companies = Vec::new();
    let mut candidates = Vec::new();
    for i in 0..opts.concurrency {
        companies.push(driver.register(format!("workload-company-{i}")).await?);
        candidates.push(driver.register(format!("workload-candidate-{i}")).await?);
    }

    let start = Instant::now();
    let driver = Arc::new(Driver { start, ..driver });
    let tally = Arc::new(Mutex::new(Tally::default()));
    run_phase(&driver, &tally, Kind::Subscribe, Arc::new(streams.subscriptions.clone()), Arc::new(companies)).await;
    run_phase(&driver, &tally, Kind::Publish, Arc::new(streams.publications.clone()), Arc::new(candidates)).await;
    let duration = start.elapsed();

    let tally = Arc::into_inner(tally).unwrap().into_inner().unwrap();
    let mut records = tally.records;
    records.sort_by_key(|r| (r.kind != "subscribe", r.index));
    let latencies = |kind: &str| LatencySummary::of(records.iter().filter(|r| r.kind == kind).map(|r| r.latency_micros).collect());
    let report = RunReport {
        broker: opts.broker,
        mode,
        rate: opts.rate,
        concurrency: opts.concurrency,
        subscriptions: tally.subs,
        publications: tally.pubs,
        matched_total: tally.matched_total,
        retries: tally.retries,
        connection_failures: tally.connection_failures,
        duration_secs: duration.as_secs_f64(),
        latency_micros: LatencyReport { subscribe: latencies("subscribe"), publish: latencies("publish") },
    };
    Ok((report, records))
}

/// Writes `report` as JSON to `path` and the request rows as CSV beside it.
pub fn write_report(path: &Path, report: &RunReport, records: &[RequestRecord]) -> Result<(), DriveError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(report).expect("report serializes") + "\n")?;
    let mut csv = csv::Writer::from_path(path.with_extension("csv"))?;
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}
