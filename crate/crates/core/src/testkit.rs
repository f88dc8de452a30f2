//! Random instance generators and the brute-force closure oracle.
//!
//! Only compiled with the `testkit` feature. The closure oracle works from
//! the raw [`OntologyDocument`], with its own synonym table, its own hop
//! distances and a naive fact-saturation loop, so it shares no traversal or
//! indexing code with [`crate::pipeline::expand_event`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde_json::json;

use crate::model::{Event, Op, Pair, Predicate, RangeEnd, Subscription, Term, Value, YearRange};
use crate::ontology::{Expr, OntologyDocument};
use crate::pipeline::{ExpandedEvent, PrecisionConfig, Stage, StageSet};

/// Shape of a random ontology.
#[derive(Clone, Copy, Debug)]
pub struct OntologyShape {
    pub terms: usize,
    pub max_mappings: usize,
    /// Allow `$k + 1` style outputs whose closure may be infinite.
    pub arithmetic: bool,
}

impl Default for OntologyShape {
    fn default() -> Self {
        OntologyShape { terms: 8, max_mappings: 3, arithmetic: false }
    }
}

/// A random domain: root terms, aliases and a document over them.
#[derive(Clone, Debug)]
pub struct RandomDomain {
    pub roots: Vec<String>,
    pub aliases: Vec<String>,
    pub document: OntologyDocument,
}

impl RandomDomain {
    pub fn all_terms(&self) -> Vec<&str> {
        self.roots.iter().chain(&self.aliases).map(String::as_str).collect()
    }
}

pub fn random_domain(rng: &mut impl RngCore, shape: OntologyShape) -> RandomDomain {
    let roots: Vec<String> = (0..shape.terms).map(|i| format!("t{i}")).collect();
    let mut aliases = Vec::new();
    let mut synonyms = Vec::new();
    for root in &roots {
        if rng.random_bool(0.35) {
            let n = rng.random_range(1..=2);
            let mut set = vec![root.clone()];
            for k in 0..n {
                let alias = format!("{root}_a{k}");
                aliases.push(alias.clone());
                set.push(alias);
            }
            synonyms.push(set);
        }
    }
    let alias_or_root = |rng: &mut dyn RngCore, root: &String| -> String {
        let own: Vec<&String> = aliases.iter().filter(|a| a.starts_with(&format!("{root}_"))).collect();
        if !own.is_empty() && rng.random_bool(0.3) {
            (*own.choose(rng).unwrap()).clone()
        } else {
            root.clone()
        }
    };

    // Edges only point from lower to higher index, so the graph is acyclic.
    let mut hierarchy = Vec::new();
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if rng.random_bool(0.18) {
                hierarchy.push(crate::ontology::EdgeDocument {
                    child: alias_or_root(rng, &roots[i]),
                    parent: alias_or_root(rng, &roots[j]),
                });
            }
        }
    }

    let mut mappings = Vec::new();
    for m in 0..rng.random_range(0..=shape.max_mappings) {
        let n_inputs = rng.random_range(1..=2);
        let mut inputs = Vec::new();
        for k in 0..n_inputs {
            let pick = roots.choose(rng).unwrap();
            let attr = alias_or_root(rng, pick);
            let constrained = rng.random_bool(0.4);
            let pick = roots.choose(rng).unwrap();
            let value = alias_or_root(rng, pick);
            inputs.push(crate::ontology::InputDocument {
                attr,
                op: constrained.then(|| "=".to_string()),
                value: constrained.then(|| json!(value)),
                capture: Some(k + 1),
            });
        }
        let mut outputs = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let pick = roots.choose(rng).unwrap();
            let attr = alias_or_root(rng, pick);
            let pick = roots.choose(rng).unwrap();
            let literal = alias_or_root(rng, pick);
            let expr = match rng.random_range(0..4) {
                0 if shape.arithmetic && inputs.iter().any(|i| i.value.is_none()) => {
                    let free: Vec<usize> = inputs.iter().filter(|i| i.value.is_none()).filter_map(|i| i.capture).collect();
                    format!("${} + 1", free.choose(rng).unwrap())
                }
                0 | 1 => format!("${}", rng.random_range(1..=n_inputs)),
                2 => format!("'{literal}'"),
                _ => format!("{}", rng.random_range(0..5)),
            };
            outputs.push(crate::ontology::OutputDocument { attr, expr: json!(expr) });
        }
        mappings.push(crate::ontology::MappingDocument { name: format!("m{m}"), inputs, outputs });
    }

    let document = OntologyDocument { domain: "random".into(), synonyms, hierarchy, mappings };
    RandomDomain { roots, aliases, document }
}

fn random_symbol(rng: &mut impl RngCore, domain: &RandomDomain) -> Value {
    let terms = domain.all_terms();
    Value::symbol(terms.choose(rng).unwrap()).unwrap()
}

fn random_range(rng: &mut impl RngCore) -> YearRange {
    let start = rng.random_range(1990..2000);
    let end = if rng.random_bool(0.2) {
        RangeEnd::Present
    } else {
        RangeEnd::Year(start + rng.random_range(0..6))
    };
    YearRange::new(start, end).unwrap()
}

pub fn random_value(rng: &mut impl RngCore, domain: &RandomDomain) -> Value {
    match rng.random_range(0..10) {
        0..=4 => random_symbol(rng, domain),
        5..=7 => Value::number(rng.random_range(0..6)),
        8 => Value::YearRange(random_range(rng)),
        _ => Value::Bool(rng.random_bool(0.5)),
    }
}

pub fn random_event(rng: &mut impl RngCore, domain: &RandomDomain, id: usize) -> Event {
    let terms = domain.all_terms();
    let n = rng.random_range(1..=6);
    let pairs = (0..n)
        .map(|_| Pair::new(Term::new(terms.choose(rng).unwrap()).unwrap(), random_value(rng, domain)))
        .collect();
    Event::new(format!("e{id}"), pairs).unwrap()
}

pub fn random_precision(rng: &mut impl RngCore) -> Option<PrecisionConfig> {
    let base = PrecisionConfig::semantic();
    match rng.random_range(0..7) {
        0 | 1 => None,
        2 => Some(PrecisionConfig::synonyms_only()),
        3 => Some(base.with_max_generality(Some(rng.random_range(0..3)))),
        4 => Some(PrecisionConfig { stages: [Stage::Synonym, Stage::Hierarchy].into_iter().collect(), ..base }),
        5 => Some(PrecisionConfig { stages: [Stage::Synonym, Stage::Mapping].into_iter().collect(), ..base }),
        _ => Some(base),
    }
}

pub fn random_subscription(rng: &mut impl RngCore, domain: &RandomDomain, id: usize) -> Subscription {
    let n = rng.random_range(1..=4);
    let mut predicates = Vec::with_capacity(n);
    while predicates.len() < n {
        let attr = Term::new(domain.all_terms().choose(rng).unwrap()).unwrap();
        let op = *Op::ALL.choose(rng).unwrap();
        let value = match op {
            Op::Eq | Op::Neq if rng.random_bool(0.6) => random_symbol(rng, domain),
            Op::Eq | Op::Neq => random_value(rng, domain),
            Op::InRange => {
                let start = rng.random_range(1988..1996);
                Value::YearRange(YearRange::new(start, RangeEnd::Year(start + rng.random_range(3..15))).unwrap())
            }
            _ => Value::number(rng.random_range(0..6)),
        };
        predicates.push(Predicate::new(attr, op, value).unwrap());
    }
    let mut s = Subscription::new(format!("s{id}"), format!("c{}", id % 7), predicates).unwrap();
    s.precision = random_precision(rng);
    s
}

/// Cost of one derivation: stages used and generality.
pub type Cost = (StageSet, u32);

/// For every derived pair, its minimal costs.
pub type Frontier = BTreeMap<Pair, BTreeSet<Cost>>;

fn minimal(costs: impl IntoIterator<Item = Cost>) -> BTreeSet<Cost> {
    let all: BTreeSet<Cost> = costs.into_iter().collect();
    all.iter()
        .filter(|(s, g)| !all.iter().any(|(s2, g2)| (s2, g2) != (s, g) && s2.is_subset(*s) && g2 <= g))
        .copied()
        .collect()
}

/// Minimal costs per pair, as computed by the pipeline.
pub fn frontier_of(x: &ExpandedEvent) -> Frontier {
    x.pairs()
        .iter()
        .map(|dp| {
            let costs = dp.derivations.iter().map(|d| (d.stages(), d.generality_used));
            (dp.pair.clone(), minimal(costs))
        })
        .collect()
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Fact {
    pair: Pair,
    stages: StageSet,
    generality: u32,
    /// Not produced by a hierarchy step, so it may still be generalized.
    base: bool,
}

/// Saturates the event's facts under the document's rules until nothing
/// changes. `cfg.max_passes` is ignored; callers must keep the closure
/// finite (no growing arithmetic).
pub fn closure_oracle(e: &Event, doc: &OntologyDocument, cfg: &PrecisionConfig, current_year: i32) -> Frontier {
    let term = |s: &str| Term::new(s).unwrap();
    let mut root: HashMap<Term, Term> = HashMap::new();
    for set in &doc.synonyms {
        for member in set {
            root.insert(term(member), term(&set[0]));
        }
    }
    let root_of = |t: &Term| root.get(t).cloned().unwrap_or_else(|| t.clone());
    let root_val = |v: &Value| match v {
        Value::Symbol(t) => Value::Symbol(root_of(t)),
        other => other.clone(),
    };

    let mut facts: HashSet<Fact> = HashSet::new();
    let syn = cfg.stages.contains(Stage::Synonym);
    for p in &e.pairs {
        let pair = if syn { Pair::new(root_of(&p.attribute), root_val(&p.value)) } else { p.clone() };
        let stages = if pair != *p { StageSet::SYNONYM } else { StageSet::EMPTY };
        facts.insert(Fact { pair, stages, generality: 0, base: true });
    }

    // Shortest upward distances by repeated relaxation over raw edges.
    let edges: Vec<(Term, Term)> = doc
        .hierarchy
        .iter()
        .map(|e| (root_of(&term(&e.child)), root_of(&term(&e.parent))))
        .collect();
    let mut dist: HashMap<(Term, Term), u32> = HashMap::new();
    for (c, p) in &edges {
        dist.insert((c.clone(), p.clone()), 1);
    }
    loop {
        let mut changed = false;
        let snapshot: Vec<((Term, Term), u32)> = dist.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for ((a, b), d1) in &snapshot {
            for (c, p) in &edges {
                if c == b {
                    let key = (a.clone(), p.clone());
                    let cand = d1 + 1;
                    if dist.get(&key).is_none_or(|&old| cand < old) {
                        dist.insert(key, cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let ups = |t: &Term| -> Vec<(Term, u32)> {
        let mut v = vec![(t.clone(), 0)];
        for ((a, b), d) in &dist {
            if a == t && cfg.max_generality.is_none_or(|cap| *d <= cap) {
                v.push((b.clone(), *d));
            }
        }
        v
    };

    struct Rule {
        inputs: Vec<(Term, Option<(String, Value)>, Option<usize>, bool)>,
        outputs: Vec<(Term, Expr)>,
    }
    let rules: Vec<Rule> = doc
        .mappings
        .iter()
        .map(|m| {
            let outputs: Vec<(Term, Expr)> = m
                .outputs
                .iter()
                .map(|o| {
                    let expr = match &o.expr {
                        serde_json::Value::String(s) => Expr::parse(s).unwrap(),
                        other => Expr::literal(Value::from_json(other).unwrap()),
                    };
                    (root_of(&term(&o.attr)), expr)
                })
                .collect();
            let arithmetic: HashSet<usize> = outputs
                .iter()
                .filter(|(_, e)| e.is_arithmetic())
                .flat_map(|(_, e)| e.captures().collect::<Vec<_>>())
                .collect();
            let inputs = m
                .inputs
                .iter()
                .map(|i| {
                    let constraint = i.value.as_ref().map(|v| {
                        (i.op.clone().unwrap_or_else(|| "=".into()), root_val(&Value::from_json(v).unwrap()))
                    });
                    let numeric = i.capture.is_some_and(|k| arithmetic.contains(&k));
                    (root_of(&term(&i.attr)), constraint, i.capture, numeric)
                })
                .collect();
            Rule { inputs, outputs }
        })
        .collect();
    let accepts = |input: &(Term, Option<(String, Value)>, Option<usize>, bool), p: &Pair| -> bool {
        if p.attribute != input.0 {
            return false;
        }
        if input.3 && p.value.as_number().is_none() {
            return false;
        }
        match &input.1 {
            None => true,
            Some((op, v)) if op == "=" => &p.value == v,
            Some((_, Value::YearRange(outer))) => match &p.value {
                Value::YearRange(inner) => {
                    outer.start() <= inner.start()
                        && inner.resolved_end(current_year) <= outer.resolved_end(current_year)
                }
                _ => false,
            },
            Some(_) => false,
        }
    };

    let hierarchy = syn && cfg.stages.contains(Stage::Hierarchy);
    let mapping = syn && cfg.stages.contains(Stage::Mapping);
    loop {
        let before = facts.len();
        let current: Vec<Fact> = facts.iter().cloned().collect();
        if hierarchy {
            for f in current.iter().filter(|f| f.base) {
                let attrs = ups(&f.pair.attribute);
                let values = match &f.pair.value {
                    Value::Symbol(t) => ups(t).into_iter().map(|(t, d)| (Value::Symbol(t), d)).collect(),
                    v => vec![(v.clone(), 0)],
                };
                for (a, da) in &attrs {
                    for (v, dv) in &values {
                        if *da == 0 && *dv == 0 {
                            continue;
                        }
                        facts.insert(Fact {
                            pair: Pair::new(a.clone(), v.clone()),
                            stages: f.stages.with(Stage::Hierarchy),
                            generality: f.generality.max(*da).max(*dv),
                            base: false,
                        });
                    }
                }
            }
        }
        if mapping {
            for rule in &rules {
                let mut chosen: Vec<Vec<&Fact>> = vec![vec![]];
                for input in &rule.inputs {
                    let mut next = Vec::new();
                    for prefix in &chosen {
                        for f in current.iter().filter(|f| accepts(input, &f.pair)) {
                            let mut v = prefix.clone();
                            v.push(f);
                            next.push(v);
                        }
                    }
                    chosen = next;
                }
                for binding in chosen {
                    let capture = |slot: usize| {
                        rule.inputs
                            .iter()
                            .position(|i| i.2 == Some(slot))
                            .map(|i| binding[i].pair.value.clone())
                    };
                    let stages = binding
                        .iter()
                        .fold(StageSet::EMPTY.with(Stage::Mapping), |s, f| s.union(f.stages));
                    let generality = binding.iter().map(|f| f.generality).max().unwrap_or(0);
                    let outs: Option<Vec<Pair>> = rule
                        .outputs
                        .iter()
                        .map(|(a, e)| e.evaluate(&capture, current_year).map(|v| Pair::new(a.clone(), root_val(&v))))
                        .collect();
                    for pair in outs.into_iter().flatten() {
                        facts.insert(Fact { pair, stages, generality, base: true });
                    }
                }
            }
        }
        if facts.len() == before {
            break;
        }
    }

    let mut grouped: BTreeMap<Pair, Vec<Cost>> = BTreeMap::new();
    for f in facts {
        grouped.entry(f.pair).or_default().push((f.stages, f.generality));
    }
    grouped.into_iter().map(|(p, c)| (p, minimal(c))).collect()
}
