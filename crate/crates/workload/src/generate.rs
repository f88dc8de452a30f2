//! Seeded generation of subscription and publication streams.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use sempubsub_core::{Event, Op, Pair, Predicate, RangeEnd, Subscription, Term, Value, YearRange};

use crate::spec::{AttributePool, DomainSpec, PoolKind, TermSpec};

pub const SUBSCRIPTIONS_FILE: &str = "subscriptions.jsonl";
pub const PUBLICATIONS_FILE: &str = "publications.jsonl";
pub const STATS_FILE: &str = "stats.json";

const ORDERING_OPS: [Op; 5] = [Op::Ge, Op::Le, Op::Gt, Op::Lt, Op::Neq];

/// How often a term that had an alias available was written as the alias.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasStats {
    pub aliasable_terms: u64,
    pub aliased_terms: u64,
}

impl AliasStats {
    pub fn fraction(&self) -> f64 {
        if self.aliasable_terms == 0 {
            return 0.0;
        }
        self.aliased_terms as f64 / self.aliasable_terms as f64
    }

    fn add(&mut self, other: AliasStats) {
        self.aliasable_terms += other.aliasable_terms;
        self.aliased_terms += other.aliased_terms;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub seed: u64,
    pub subscriptions: Vec<Subscription>,
    pub publications: Vec<Event>,
    pub stats: AliasStats,
}

struct Source<'a> {
    spec: &'a DomainSpec,
    rng: ChaCha8Rng,
    stats: AliasStats,
}

fn term(s: &str) -> Term {
    Term::new(s).expect("spec terms are validated")
}

impl Source<'_> {
    /// Root or, with the configured probability, one of its aliases.
    fn spell(&mut self, root: &str, aliases: &[String]) -> Term {
        if aliases.is_empty() {
            return term(root);
        }
        self.stats.aliasable_terms += 1;
        if self.rng.random_bool(self.spec.synonym_usage) {
            self.stats.aliased_terms += 1;
            term(aliases.choose(&mut self.rng).unwrap())
        } else {
            term(root)
        }
    }

    fn symbol(&mut self, t: &TermSpec) -> Value {
        Value::Symbol(self.spell(&t.term, &t.aliases))
    }

    fn count(&mut self, min: usize, max: usize) -> usize {
        self.rng.random_range(min..=max)
    }

    fn predicate(&mut self, a: &AttributePool) -> Predicate {
        let attribute = self.spell(&a.name, &a.aliases);
        let equality = self.rng.random_bool(self.spec.equality_bias);
        let (op, value) = match &a.kind {
            PoolKind::Symbol { values } => {
                let v = values.choose(&mut self.rng).unwrap();
                (if equality { Op::Eq } else { Op::Neq }, self.symbol(v))
            }
            PoolKind::Number { min, max } => {
                let op = if equality { Op::Eq } else { *ORDERING_OPS.choose(&mut self.rng).unwrap() };
                (op, Value::number(self.rng.random_range(*min..=*max)))
            }
            PoolKind::YearRange { min, max, max_span, .. } => {
                let start = self.rng.random_range(*min..=*max);
                let end = (start + self.rng.random_range(0..=2 * max_span)).min(*max);
                (Op::InRange, Value::YearRange(YearRange::new(start, RangeEnd::Year(end)).unwrap()))
            }
            PoolKind::Bool => (Op::Eq, Value::Bool(self.rng.random_bool(0.5))),
        };
        Predicate::new(attribute, op, value).expect("generated predicates are well typed")
    }

    fn pair(&mut self, a: &AttributePool) -> Pair {
        let attribute = self.spell(&a.name, &a.aliases);
        let value = match &a.kind {
            PoolKind::Symbol { values } => {
                let weights = WeightedIndex::new(values.iter().map(|v| v.depth + 1)).unwrap();
                let v = &values[weights.sample(&mut self.rng)];
                self.symbol(v)
            }
            PoolKind::Number { min, max } => Value::number(self.rng.random_range(*min..=*max)),
            PoolKind::YearRange { min, max, max_span, present_probability } => {
                let start = self.rng.random_range(*min..=*max);
                let end = if self.rng.random_bool(*present_probability) {
                    RangeEnd::Present
                } else {
                    RangeEnd::Year(start + self.rng.random_range(0..=*max_span))
                };
                Value::YearRange(YearRange::new(start, end).unwrap())
            }
            PoolKind::Bool => Value::Bool(self.rng.random_bool(0.5)),
        };
        Pair::new(attribute, value)
    }

    fn subscription(&mut self, i: usize) -> Subscription {
        let k = self.count(self.spec.predicates.min, self.spec.predicates.max);
        let mut pools: Vec<&AttributePool> = self.spec.attributes.iter().collect();
        pools.shuffle(&mut self.rng);
        // Distinct attributes while they last, then repeats.
        let chosen: Vec<&AttributePool> = (0..k).map(|j| pools[j % pools.len()]).collect();
        let predicates = chosen.into_iter().map(|a| self.predicate(a)).collect();
        Subscription::new(format!("sub-{i:06}"), "", predicates).unwrap()
    }

    fn publication(&mut self, i: usize) -> Event {
        let k = self.count(self.spec.pairs.min, self.spec.pairs.max);
        let pairs = (0..k)
            .map(|_| {
                let a = self.spec.attributes.choose(&mut self.rng).unwrap();
                self.pair(a)
            })
            .collect();
        Event::new(format!("pub-{i:06}"), pairs).unwrap()
    }
}

/// Subscriptions and publications come from separate ChaCha8 streams of the
/// same seed, so changing one count leaves the other stream unchanged.
pub fn generate(seed: u64, n_subs: usize, n_pubs: usize, spec: &DomainSpec) -> Workload {
    let source = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Source { spec, rng, stats: AliasStats::default() }
    };
    let mut subs = source(0);
    let subscriptions = (0..n_subs).map(|i| subs.subscription(i)).collect();
    let mut pubs = source(1);
    let publications = (0..n_pubs).map(|i| pubs.publication(i)).collect();
    let mut stats = subs.stats;
    stats.add(pubs.stats);
    Workload { seed, subscriptions, publications, stats }
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsFile {
    seed: u64,
    subscriptions: usize,
    publications: usize,
    #[serde(flatten)]
    aliases: AliasStats,
    alias_fraction: f64,
}

fn write_lines(path: &Path, docs: impl Iterator<Item = Json>) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut out, &doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes the two JSON-lines streams and a small stats file into `dir`.
pub fn write_workload(dir: &Path, w: &Workload) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_lines(&dir.join(SUBSCRIPTIONS_FILE), w.subscriptions.iter().map(Subscription::to_json))?;
    write_lines(&dir.join(PUBLICATIONS_FILE), w.publications.iter().map(Event::to_json))?;
    let stats = StatsFile {
        seed: w.seed,
        subscriptions: w.subscriptions.len(),
        publications: w.publications.len(),
        aliases: w.stats,
        alias_fraction: w.stats.fraction(),
    };
    fs::write(dir.join(STATS_FILE), serde_json::to_string_pretty(&stats)? + "\n")
}

fn read_lines(path: &Path) -> io::Result<Vec<Json>> {
    let file = match fs::File::open(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        other => other?,
    };
    let mut docs = Vec::new();
    for (n, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Subscription and publication documents, as written by [`write_workload`].
/// A missing file reads as an empty stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Streams {
    pub subscriptions: Vec<Json>,
    pub publications: Vec<Json>,
}

impl Streams {
    pub fn read(dir: &Path) -> io::Result<Streams> {
        Ok(Streams {
            subscriptions: read_lines(&dir.join(SUBSCRIPTIONS_FILE))?,
            publications: read_lines(&dir.join(PUBLICATIONS_FILE))?,
        })
    }

    pub fn from_workload(w: &Workload) -> Streams {
        Streams {
            subscriptions: w.subscriptions.iter().map(Subscription::to_json).collect(),
            publications: w.publications.iter().map(Event::to_json).collect(),
        }
    }
}
