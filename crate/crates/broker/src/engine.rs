use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value as Json;
use tokio::sync::broadcast;

use sempubsub_core::{
    expand_event, normalize_subscription, Event, ExpandedEvent, Notification, Ontology, PrecisionConfig, PredicateIndex,
    Stage, SubMatch, Subscription,
};

use crate::client::{ClientRecord, Transport};
use crate::config::{BrokerConfig, Mode};
use crate::delivery;
use crate::error::BrokerError;
use crate::store::{DeadLetter, EventLog, Record};

const STREAM_CAPACITY: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PublishReceipt {
    pub event_id: String,
    pub matched_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Status {
    pub mode: Mode,
    pub clients: usize,
    pub subscriptions: usize,
    pub events: u64,
    pub notifications: u64,
    pub queued: usize,
    pub dead_letters: usize,
    pub pending_webhooks: usize,
    pub corrupt_log_entries: u64,
    pub ontology_digest: String,
    pub domains: Vec<String>,
    pub current_year: i32,
}

/// The event dispatcher. Cheap to clone; clones share state.
#[derive(Clone)]
pub struct Broker {
    inner: Arc<Inner>,
}

pub(crate) struct Inner {
    config: BrokerConfig,
    ontology: Ontology,
    mode: RwLock<Mode>,
    state: RwLock<State>,
    outbox: Mutex<Outbox>,
    log: Mutex<Option<EventLog>>,
    pub(crate) http: reqwest::Client,
    events: AtomicU64,
    pub(crate) pending_webhooks: AtomicUsize,
    corrupt: u64,
}

struct State {
    clients: HashMap<String, ClientRecord>,
    owners: HashMap<String, String>,
    /// Every subscription as written, for literal matching.
    raw: PredicateIndex,
    /// Subscriptions whose precision enables stages, with normalized terms.
    semantic: PredicateIndex,
    /// Subscriptions whose precision enables no stage.
    literal_only: HashSet<String>,
    /// Join of every semantic subscription's precision and the default.
    expansion: PrecisionConfig,
}

#[derive(Default)]
struct Outbox {
    seq: u64,
    delivered: HashSet<String>,
    queues: HashMap<String, VecDeque<(u64, Notification)>>,
    streams: HashMap<String, broadcast::Sender<Notification>>,
    dead: Vec<DeadLetter>,
    notifications: u64,
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Smallest config that admits everything either argument admits.
fn join(a: PrecisionConfig, b: PrecisionConfig) -> PrecisionConfig {
    PrecisionConfig {
        stages: a.stages.union(b.stages),
        max_generality: match (a.max_generality, b.max_generality) {
            (Some(x), Some(y)) => Some(x.max(y)),
            _ => None,
        },
        max_passes: a.max_passes.max(b.max_passes),
    }
}

impl State {
    fn new(config: &BrokerConfig) -> State {
        State {
            clients: HashMap::new(),
            owners: HashMap::new(),
            raw: PredicateIndex::with_default_precision(config.current_year, config.default_precision),
            semantic: PredicateIndex::with_default_precision(config.current_year, config.default_precision),
            literal_only: HashSet::new(),
            expansion: config.default_precision,
        }
    }

    fn insert_subscription(&mut self, s: Subscription, ontology: &Ontology, default: PrecisionConfig) {
        let precision = s.precision.unwrap_or(default);
        self.owners.insert(s.sub_id.clone(), s.subscriber.clone());
        if precision.stages.contains(Stage::Synonym) {
            self.expansion = join(self.expansion, precision);
            self.semantic
                .add_subscription(normalize_subscription(&s, ontology))
                .expect("sub_id checked unique");
        } else {
            self.literal_only.insert(s.sub_id.clone());
        }
        self.raw.add_subscription(s).expect("sub_id checked unique");
    }

    fn remove_subscription(&mut self, sub_id: &str, default: PrecisionConfig) -> bool {
        if !self.raw.remove_subscription(sub_id) {
            return false;
        }
        self.owners.remove(sub_id);
        self.literal_only.remove(sub_id);
        if self.semantic.remove_subscription(sub_id) {
            self.expansion = self
                .semantic
                .subscriptions()
                .iter()
                .map(|s| s.precision.unwrap_or(default))
                .fold(default, join);
        }
        true
    }
}

impl Broker {
    /// Starts a broker, replaying the log in `config.data_dir` if there is one.
    pub fn open(config: BrokerConfig, ontology: Ontology) -> Result<Broker, BrokerError> {
        let mut state = State::new(&config);
        let mut outbox = Outbox::default();
        let mut corrupt = 0;
        let mut log = None;
        if let Some(dir) = &config.data_dir {
            let (opened, recovered) = EventLog::open(dir)?;
            corrupt = recovered.corrupt;
            for record in recovered.records {
                if !replay(&mut state, &mut outbox, record, &ontology, config.default_precision) {
                    corrupt += 1;
                }
            }
            log::info!(
                "recovered {} clients, {} subscriptions, {} queued notifications from {}",
                state.clients.len(),
                state.raw.len(),
                outbox.queues.values().map(VecDeque::len).sum::<usize>(),
                opened.path().display()
            );
            log = Some(opened);
        }
        let mode = RwLock::new(config.mode);
        Ok(Broker {
            inner: Arc::new(Inner {
                config,
                ontology,
                mode,
                state: RwLock::new(state),
                outbox: Mutex::new(outbox),
                log: Mutex::new(log),
                http: reqwest::Client::new(),
                events: AtomicU64::new(0),
                pending_webhooks: AtomicUsize::new(0),
                corrupt,
            }),
        })
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.inner.config
    }

    pub fn ontology(&self) -> &Ontology {
        &self.inner.ontology
    }

    pub(crate) fn inner(&self) -> &Inner {
        &self.inner
    }

    fn persist(&self, record: &Record) -> Result<(), BrokerError> {
        if let Some(log) = self.inner.log.lock().unwrap().as_mut() {
            log.append(record)?;
        }
        Ok(())
    }

    /// Registers a client; a missing id gets a fresh uuid.
    pub fn register_client(
        &self,
        client_id: Option<String>,
        name: impl Into<String>,
        transport: Transport,
    ) -> Result<ClientRecord, BrokerError> {
        let client_id = match client_id {
            Some(id) if id.trim().is_empty() => return Err(BrokerError::InvalidRequest("empty client_id".into())),
            Some(id) => id,
            None => uuid::Uuid::new_v4().to_string(),
        };
        let record = ClientRecord { client_id: client_id.clone(), name: name.into(), transport };
        let mut state = self.inner.state.write().unwrap();
        if state.clients.contains_key(&client_id) {
            return Err(BrokerError::DuplicateClient(client_id));
        }
        self.persist(&Record::Client { client: record.clone() })?;
        state.clients.insert(client_id, record.clone());
        Ok(record)
    }

    pub fn client(&self, client_id: &str) -> Option<ClientRecord> {
        self.inner.state.read().unwrap().clients.get(client_id).cloned()
    }

    /// Parses and registers a subscription document on behalf of `client_id`.
    pub fn subscribe(&self, client_id: &str, document: &Json) -> Result<String, BrokerError> {
        self.subscribe_parsed(client_id, Subscription::from_json(document)?)
    }

    pub fn subscribe_parsed(&self, client_id: &str, mut s: Subscription) -> Result<String, BrokerError> {
        s.subscriber = client_id.to_string();
        let mut state = self.inner.state.write().unwrap();
        if !state.clients.contains_key(client_id) {
            return Err(BrokerError::UnknownClient(client_id.into()));
        }
        if state.raw.contains(&s.sub_id) {
            return Err(BrokerError::DuplicateSubscription(s.sub_id));
        }
        self.persist(&Record::Subscribe { client_id: client_id.into(), subscription: s.clone() })?;
        let sub_id = s.sub_id.clone();
        state.insert_subscription(s, &self.inner.ontology, self.inner.config.default_precision);
        Ok(sub_id)
    }

    pub fn unsubscribe(&self, sub_id: &str) -> Result<(), BrokerError> {
        let mut state = self.inner.state.write().unwrap();
        if !state.raw.contains(sub_id) {
            return Err(BrokerError::UnknownSubscription(sub_id.into()));
        }
        self.persist(&Record::Unsubscribe { sub_id: sub_id.into() })?;
        state.remove_subscription(sub_id, self.inner.config.default_precision);
        Ok(())
    }

    pub fn subscription(&self, sub_id: &str) -> Option<Subscription> {
        self.inner.state.read().unwrap().raw.get(sub_id).cloned()
    }

    pub fn mode(&self) -> Mode {
        *self.inner.mode.read().unwrap()
    }

    /// Affects publications that start after the call returns.
    pub fn set_mode(&self, mode: Mode) {
        *self.inner.mode.write().unwrap() = mode;
        log::info!("mode set to {mode}");
    }

    pub fn check_admin(&self, token: Option<&str>) -> Result<(), BrokerError> {
        match &self.inner.config.admin_token {
            Some(expected) if token != Some(expected.as_str()) => Err(BrokerError::Unauthorized),
            _ => Ok(()),
        }
    }

    /// Expands an event as the given mode would for the current store.
    pub fn expand(&self, e: &Event, mode: Mode) -> ExpandedEvent {
        match mode {
            Mode::Syntactic => ExpandedEvent::verbatim(e),
            Mode::Semantic => {
                let cfg = self.inner.state.read().unwrap().expansion;
                expand_event(e, &self.inner.ontology, &cfg, self.inner.config.current_year)
            }
        }
    }

    /// Matches without delivering anything.
    pub fn match_event(&self, e: &Event, mode: Mode) -> Vec<SubMatch> {
        let state = self.inner.state.read().unwrap();
        match_with(&state, &self.inner, e, mode)
    }

    pub fn publish(&self, client_id: &str, document: &Json) -> Result<PublishReceipt, BrokerError> {
        self.publish_event(client_id, Event::from_json(document)?)
    }

    /// Matches `e` under the current mode and hands one notification per
    /// matched subscription to its subscriber's transport.
    pub fn publish_event(&self, client_id: &str, mut e: Event) -> Result<PublishReceipt, BrokerError> {
        if e.received_at.is_none() {
            e.received_at = Some(now_millis());
        }
        let mode = self.mode();
        let deliveries: Vec<(SubMatch, Transport)> = {
            let state = self.inner.state.read().unwrap();
            if !state.clients.contains_key(client_id) {
                return Err(BrokerError::UnknownClient(client_id.into()));
            }
            match_with(&state, &self.inner, &e, mode)
                .into_iter()
                .filter_map(|m| {
                    let transport = state.clients.get(&m.subscriber)?.transport.clone();
                    Some((m, transport))
                })
                .collect()
        };
        self.inner.events.fetch_add(1, Ordering::Relaxed);
        let matched_count = deliveries.len();

        let mut webhooks = Vec::new();
        {
            let mut outbox = self.inner.outbox.lock().unwrap();
            for (m, transport) in deliveries {
                let dedupe_key = Notification::dedupe_key(&e.event_id, &m.sub_id);
                if outbox.delivered.contains(&dedupe_key) {
                    continue;
                }
                let mut n = Notification {
                    event_id: e.event_id.clone(),
                    sub_id: m.sub_id,
                    subscriber: m.subscriber.clone(),
                    publisher: client_id.to_string(),
                    trace: m.trace,
                    delivered_via: transport.name().into(),
                    dedupe_key: dedupe_key.clone(),
                };
                let seq = outbox.seq + 1;
                let queued = match &transport {
                    Transport::Queue => true,
                    Transport::Webhook { .. } => false,
                    Transport::Stream => !outbox
                        .streams
                        .get(&m.subscriber)
                        .is_some_and(|tx| tx.receiver_count() > 0),
                };
                if queued {
                    n.delivered_via = "queue".into();
                }
                self.persist(&Record::Notify { seq, client_id: m.subscriber.clone(), queued, notification: n.clone() })?;
                outbox.seq = seq;
                outbox.delivered.insert(dedupe_key);
                outbox.notifications += 1;
                match transport {
                    _ if queued => outbox.queues.entry(m.subscriber).or_default().push_back((seq, n)),
                    Transport::Stream => {
                        let _ = outbox.streams[&m.subscriber].send(n);
                    }
                    Transport::Webhook { url } => webhooks.push((url, n)),
                    Transport::Queue => unreachable!(),
                }
            }
        }
        for (url, n) in webhooks {
            delivery::spawn_webhook(self.clone(), url, n);
        }
        Ok(PublishReceipt { event_id: e.event_id, matched_count })
    }

    /// Removes and returns the client's queued notifications, oldest first.
    pub fn drain(&self, client_id: &str) -> Result<Vec<Notification>, BrokerError> {
        if self.client(client_id).is_none() {
            return Err(BrokerError::UnknownClient(client_id.into()));
        }
        let mut outbox = self.inner.outbox.lock().unwrap();
        drain_locked(self, &mut outbox, client_id)
    }

    /// Opens a live feed for a stream client. Notifications queued while no
    /// feed was open come back as the backlog.
    pub fn open_stream(
        &self,
        client_id: &str,
    ) -> Result<(Vec<Notification>, broadcast::Receiver<Notification>), BrokerError> {
        match self.client(client_id) {
            None => return Err(BrokerError::UnknownClient(client_id.into())),
            Some(c) if c.transport != Transport::Stream => {
                return Err(BrokerError::InvalidRequest(format!("client {client_id} is not bound to a stream")))
            }
            Some(_) => {}
        }
        let mut outbox = self.inner.outbox.lock().unwrap();
        let rx = outbox
            .streams
            .entry(client_id.to_string())
            .or_insert_with(|| broadcast::channel(STREAM_CAPACITY).0)
            .subscribe();
        let backlog = drain_locked(self, &mut outbox, client_id)?;
        Ok((backlog, rx))
    }

    pub(crate) fn dead_letter(&self, letter: DeadLetter) {
        let mut outbox = self.inner.outbox.lock().unwrap();
        if let Err(e) = self.persist(&Record::DeadLetter { letter: letter.clone() }) {
            log::error!("could not persist dead letter {}: {e}", letter.notification.dedupe_key);
        }
        outbox.dead.push(letter);
    }

    pub fn dead_letters(&self) -> Vec<DeadLetter> {
        self.inner.outbox.lock().unwrap().dead.clone()
    }

    pub fn status(&self) -> Status {
        let state = self.inner.state.read().unwrap();
        let outbox = self.inner.outbox.lock().unwrap();
        Status {
            mode: self.mode(),
            clients: state.clients.len(),
            subscriptions: state.raw.len(),
            events: self.inner.events.load(Ordering::Relaxed),
            notifications: outbox.notifications,
            queued: outbox.queues.values().map(VecDeque::len).sum(),
            dead_letters: outbox.dead.len(),
            pending_webhooks: self.inner.pending_webhooks.load(Ordering::Relaxed),
            corrupt_log_entries: self.inner.corrupt,
            ontology_digest: self.inner.ontology.digest().to_string(),
            domains: self.inner.ontology.domains().to_vec(),
            current_year: self.inner.config.current_year,
        }
    }
}

fn match_with(state: &State, inner: &Inner, e: &Event, mode: Mode) -> Vec<SubMatch> {
    let verbatim = ExpandedEvent::verbatim(e);
    match mode {
        Mode::Syntactic => state.raw.match_event(&verbatim),
        Mode::Semantic => {
            let x = expand_event(e, &inner.ontology, &state.expansion, inner.config.current_year);
            let mut found: BTreeMap<String, SubMatch> =
                state.semantic.match_event(&x).into_iter().map(|m| (m.sub_id.clone(), m)).collect();
            if !state.literal_only.is_empty() {
                for m in state.raw.match_event(&verbatim) {
                    if state.literal_only.contains(&m.sub_id) {
                        found.insert(m.sub_id.clone(), m);
                    }
                }
            }
            found.into_values().collect()
        }
    }
}

fn drain_locked(broker: &Broker, outbox: &mut Outbox, client_id: &str) -> Result<Vec<Notification>, BrokerError> {
    let Some(queue) = outbox.queues.get_mut(client_id).filter(|q| !q.is_empty()) else {
        return Ok(Vec::new());
    };
    let upto = queue.back().map(|(seq, _)| *seq).unwrap_or(0);
    broker.persist(&Record::Drain { client_id: client_id.into(), upto })?;
    Ok(queue.drain(..).map(|(_, n)| n).collect())
}

/// Applies one recovered record; false if it does not fit the state so far.
fn replay(state: &mut State, outbox: &mut Outbox, record: Record, ontology: &Ontology, default: PrecisionConfig) -> bool {
    match record {
        Record::Client { client } => {
            if state.clients.contains_key(&client.client_id) {
                return false;
            }
            state.clients.insert(client.client_id.clone(), client);
        }
        Record::Subscribe { client_id, mut subscription } => {
            if !state.clients.contains_key(&client_id) || state.raw.contains(&subscription.sub_id) {
                return false;
            }
            subscription.subscriber = client_id;
            state.insert_subscription(subscription, ontology, default);
        }
        Record::Unsubscribe { sub_id } => return state.remove_subscription(&sub_id, default),
        Record::Notify { seq, client_id, queued, notification } => {
            outbox.seq = outbox.seq.max(seq);
            outbox.delivered.insert(notification.dedupe_key.clone());
            outbox.notifications += 1;
            if queued {
                outbox.queues.entry(client_id).or_default().push_back((seq, notification));
            }
        }
        Record::Drain { client_id, upto } => {
            if let Some(q) = outbox.queues.get_mut(&client_id) {
                q.retain(|(seq, _)| *seq > upto);
            }
        }
        Record::DeadLetter { letter } => outbox.dead.push(letter),
    }
    true
}
