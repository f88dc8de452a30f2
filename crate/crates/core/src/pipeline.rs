//! Semantic stage orchestration.
//!
//! Subscriptions only get synonym normalization. Events are expanded: first
//! every pair is rewritten to synonym roots, then hierarchy generalization
//! and mapping functions run in alternating passes until nothing new is
//! derived or the pass bound is hit.
//!
//! The expansion is a single accumulated pair set. Each pair keeps the
//! cheapest ways it was derived ([`Derivation`]s), where cost is the set
//! of stages used and the generality (hierarchy hops). A derivation is
//! dropped only when another one for the same pair is at least as cheap on
//! both counts, which keeps per-subscriber admissibility exact without
//! materializing every derived event variant.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Event, Pair, StageRecord, Subscription, Value};
use crate::ontology::{for_each_binding, Ontology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synonym,
    Hierarchy,
    Mapping,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Synonym, Stage::Hierarchy, Stage::Mapping];

    fn bit(self) -> u8 {
        match self {
            Stage::Synonym => 1,
            Stage::Hierarchy => 2,
            Stage::Mapping => 4,
        }
    }

    fn of(record: &StageRecord) -> Stage {
        match record {
            StageRecord::Synonym { .. } => Stage::Synonym,
            StageRecord::Hierarchy { .. } => Stage::Hierarchy,
            StageRecord::Mapping { .. } => Stage::Mapping,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Synonym => "synonym",
            Stage::Hierarchy => "hierarchy",
            Stage::Mapping => "mapping",
        })
    }
}

/// A subset of the three stages.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StageSet(u8);

impl StageSet {
    pub const EMPTY: StageSet = StageSet(0);
    pub const ALL: StageSet = StageSet(7);
    pub const SYNONYM: StageSet = StageSet(1);

    pub fn contains(self, stage: Stage) -> bool {
        self.0 & stage.bit() != 0
    }

    pub fn with(self, stage: Stage) -> StageSet {
        StageSet(self.0 | stage.bit())
    }

    pub fn union(self, other: StageSet) -> StageSet {
        StageSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: StageSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Stage> {
        Stage::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<Stage> for StageSet {
    fn from_iter<I: IntoIterator<Item = Stage>>(iter: I) -> Self {
        iter.into_iter().fold(StageSet::EMPTY, StageSet::with)
    }
}

impl fmt::Debug for StageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for StageSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for StageSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Vec::<Stage>::deserialize(deserializer)?.into_iter().collect())
    }
}

pub const DEFAULT_MAX_PASSES: u32 = 4;

/// How much semantic freedom a subscriber (or the broker) allows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPrecision")]
pub struct PrecisionConfig {
    pub stages: StageSet,
    /// Hop cap for hierarchy generalization; `None` is unbounded.
    pub max_generality: Option<u32>,
    pub max_passes: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PrecisionError {
    #[error("hierarchy and mapping stages require the synonym stage")]
    MissingSynonymStage,
    #[error("max_passes must be at least 1")]
    ZeroPasses,
}

impl PrecisionConfig {
    pub fn new(stages: StageSet, max_generality: Option<u32>, max_passes: u32) -> Result<Self, PrecisionError> {
        if (stages.contains(Stage::Hierarchy) || stages.contains(Stage::Mapping)) && !stages.contains(Stage::Synonym) {
            return Err(PrecisionError::MissingSynonymStage);
        }
        if max_passes == 0 {
            return Err(PrecisionError::ZeroPasses);
        }
        Ok(PrecisionConfig { stages, max_generality, max_passes })
    }

    /// All stages, unbounded generality, default pass bound.
    pub fn semantic() -> Self {
        PrecisionConfig { stages: StageSet::ALL, max_generality: None, max_passes: DEFAULT_MAX_PASSES }
    }

    /// No stages: expansion is the identity.
    pub fn syntactic() -> Self {
        PrecisionConfig { stages: StageSet::EMPTY, max_generality: None, max_passes: DEFAULT_MAX_PASSES }
    }

    pub fn synonyms_only() -> Self {
        PrecisionConfig { stages: StageSet::SYNONYM, ..Self::semantic() }
    }

    pub fn with_max_generality(mut self, hops: Option<u32>) -> Self {
        self.max_generality = hops;
        self
    }

    pub fn with_max_passes(mut self, passes: u32) -> Self {
        self.max_passes = passes.max(1);
        self
    }
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self::semantic()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrecision {
    #[serde(default = "all_stages")]
    stages: StageSet,
    #[serde(default, deserialize_with = "generality")]
    max_generality: Option<u32>,
    #[serde(default = "default_passes")]
    max_passes: u32,
}

fn all_stages() -> StageSet {
    StageSet::ALL
}

fn default_passes() -> u32 {
    DEFAULT_MAX_PASSES
}

/// Accepts a count, `null`, or the string `"unbounded"`.
fn generality<'de, D: serde::Deserializer<'de>>(deserializer: D) -> Result<Option<u32>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Hops(u32),
        Word(String),
    }
    match Option::<Raw>::deserialize(deserializer)? {
        None => Ok(None),
        Some(Raw::Hops(n)) => Ok(Some(n)),
        Some(Raw::Word(w)) if w == "unbounded" => Ok(None),
        Some(Raw::Word(w)) => Err(serde::de::Error::custom(format!("invalid max_generality {w:?}"))),
    }
}

impl TryFrom<RawPrecision> for PrecisionConfig {
    type Error = PrecisionError;

    fn try_from(raw: RawPrecision) -> Result<Self, Self::Error> {
        PrecisionConfig::new(raw.stages, raw.max_generality, raw.max_passes)
    }
}

/// One way a pair was obtained from the original event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub provenance: Vec<StageRecord>,
    /// Largest hop count of any hierarchy step in `provenance`.
    pub generality_used: u32,
    stages: StageSet,
}

impl Derivation {
    /// An original pair, untouched by any stage.
    pub fn original() -> Derivation {
        Derivation { provenance: Vec::new(), generality_used: 0, stages: StageSet::EMPTY }
    }

    pub fn stages(&self) -> StageSet {
        self.stages
    }

    fn then(&self, record: StageRecord) -> Derivation {
        let mut next = self.clone();
        next.push(record);
        next
    }

    fn push(&mut self, record: StageRecord) {
        if let StageRecord::Hierarchy { hops, .. } = &record {
            self.generality_used = self.generality_used.max(*hops);
        }
        self.stages = self.stages.with(Stage::of(&record));
        self.provenance.push(record);
    }

    /// Hierarchy output; these are not generalized again, since their hop
    /// distance is measured from the term they were generalized from.
    fn is_generalized(&self) -> bool {
        matches!(self.provenance.last(), Some(StageRecord::Hierarchy { .. }))
    }

    /// `self` makes `other` redundant.
    fn dominates(&self, other: &Derivation) -> bool {
        self.stages.is_subset(other.stages)
            && self.generality_used <= other.generality_used
            && (!self.is_generalized() || other.is_generalized())
    }
}

/// Whether a pair obtained via `d` may satisfy predicates of `s`.
pub fn admissible(d: &Derivation, s: &Subscription) -> bool {
    admissible_under(d, &s.precision.unwrap_or_default())
}

pub fn admissible_under(d: &Derivation, precision: &PrecisionConfig) -> bool {
    precision.max_generality.is_none_or(|cap| d.generality_used <= cap) && d.stages.is_subset(precision.stages)
}

/// A pair of the expanded event with its non-redundant derivations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedPair {
    pub pair: Pair,
    pub derivations: Vec<Derivation>,
}

impl DerivedPair {
    pub fn admissible_derivation(&self, precision: &PrecisionConfig) -> Option<&Derivation> {
        self.derivations.iter().find(|d| admissible_under(d, precision))
    }
}

/// The accumulated result of expanding one event.
#[derive(Clone, Debug)]
pub struct ExpandedEvent {
    pub event_id: String,
    pairs: Vec<DerivedPair>,
    index: HashMap<Pair, usize>,
    passes_run: u32,
    stable: bool,
}

impl ExpandedEvent {
    fn new(event_id: String) -> Self {
        ExpandedEvent { event_id, pairs: Vec::new(), index: HashMap::new(), passes_run: 0, stable: true }
    }

    /// Wraps an event's pairs without any semantic processing.
    pub fn verbatim(e: &Event) -> Self {
        let mut x = ExpandedEvent::new(e.event_id.clone());
        for p in &e.pairs {
            x.insert(p.clone(), Derivation::original());
        }
        x
    }

    pub fn pairs(&self) -> &[DerivedPair] {
        &self.pairs
    }

    pub fn get(&self, pair: &Pair) -> Option<&DerivedPair> {
        self.index.get(pair).map(|&i| &self.pairs[i])
    }

    pub fn contains(&self, pair: &Pair) -> bool {
        self.index.contains_key(pair)
    }

    pub fn plain_pairs(&self) -> Vec<Pair> {
        self.pairs.iter().map(|d| d.pair.clone()).collect()
    }

    pub fn passes_run(&self) -> u32 {
        self.passes_run
    }

    /// False when the pass bound stopped expansion before a fixpoint.
    pub fn reached_fixpoint(&self) -> bool {
        self.stable
    }

    /// Adds a derivation; returns whether it was not redundant.
    fn insert(&mut self, pair: Pair, d: Derivation) -> bool {
        match self.index.get(&pair) {
            None => {
                self.index.insert(pair.clone(), self.pairs.len());
                self.pairs.push(DerivedPair { pair, derivations: vec![d] });
                true
            }
            Some(&i) => {
                let existing = &mut self.pairs[i].derivations;
                if existing.iter().any(|e| e.dominates(&d)) {
                    return false;
                }
                existing.retain(|e| !d.dominates(e));
                existing.push(d);
                true
            }
        }
    }
}

/// Rewrites predicate attributes and symbolic values to synonym roots.
pub fn normalize_subscription(s: &Subscription, o: &Ontology) -> Subscription {
    let predicates = s
        .predicates
        .iter()
        .map(|p| p.with_terms(o.root_of(p.attribute()).clone(), o.root_value(p.value())))
        .collect();
    Subscription { predicates, ..s.clone() }
}

/// Computes the semantic closure of an event under `cfg`.
pub fn expand_event(e: &Event, o: &Ontology, cfg: &PrecisionConfig, current_year: i32) -> ExpandedEvent {
    if !cfg.stages.contains(Stage::Synonym) {
        return ExpandedEvent::verbatim(e);
    }
    let mut x = ExpandedEvent::new(e.event_id.clone());
    let mut frontier: Vec<(Pair, Derivation)> = Vec::new();
    for p in &e.pairs {
        let mut d = Derivation::original();
        let attribute = o.root_of(&p.attribute).clone();
        if attribute != p.attribute {
            d.push(StageRecord::Synonym { from: p.attribute.clone(), to: attribute.clone() });
        }
        let value = o.root_value(&p.value);
        if let (Value::Symbol(from), Value::Symbol(to)) = (&p.value, &value) {
            if from != to {
                d.push(StageRecord::Synonym { from: from.clone(), to: to.clone() });
            }
        }
        let pair = Pair::new(attribute, value);
        if x.insert(pair.clone(), d.clone()) {
            frontier.push((pair, d));
        }
    }

    let hierarchy = cfg.stages.contains(Stage::Hierarchy);
    let mapping = cfg.stages.contains(Stage::Mapping);
    if !hierarchy && !mapping {
        return x;
    }

    x.stable = false;
    for pass in 1..=cfg.max_passes {
        x.passes_run = pass;
        let mut next = Vec::new();
        if hierarchy {
            for (pair, d) in &frontier {
                if d.is_generalized() {
                    continue;
                }
                generalize(&mut x, o, cfg.max_generality, pair, d, &mut next);
            }
        }
        if mapping {
            fire_mappings(&mut x, o, current_year, &mut next);
        }
        if next.is_empty() {
            x.stable = true;
            break;
        }
        frontier = next;
    }
    x
}

fn generalize(
    x: &mut ExpandedEvent,
    o: &Ontology,
    cap: Option<u32>,
    pair: &Pair,
    d: &Derivation,
    added: &mut Vec<(Pair, Derivation)>,
) {
    let attrs = o.ancestors(&pair.attribute, cap);
    let values = match &pair.value {
        Value::Symbol(t) => o.ancestors(t, cap),
        _ => &[],
    };
    let attr_choices = std::iter::once(None).chain(attrs.iter().map(Some));
    for attr in attr_choices {
        let value_choices = std::iter::once(None).chain(values.iter().map(Some));
        for value in value_choices {
            if attr.is_none() && value.is_none() {
                continue;
            }
            let mut next = d.clone();
            let mut out = pair.clone();
            if let Some((to, hops)) = attr {
                next.push(StageRecord::Hierarchy { from: pair.attribute.clone(), to: to.clone(), hops: *hops });
                out.attribute = to.clone();
            }
            if let Some((to, hops)) = value {
                let from = pair.value.as_symbol().expect("symbolic value").clone();
                next.push(StageRecord::Hierarchy { from, to: to.clone(), hops: *hops });
                out.value = Value::Symbol(to.clone());
            }
            if x.insert(out.clone(), next.clone()) {
                added.push((out, next));
            }
        }
    }
}

fn fire_mappings(x: &mut ExpandedEvent, o: &Ontology, current_year: i32, added: &mut Vec<(Pair, Derivation)>) {
    let pairs = x.plain_pairs();
    let triggered = o.triggered_by(pairs.iter().map(|p| &p.attribute));
    let mut produced: Vec<(Pair, Derivation)> = Vec::new();
    for i in triggered {
        let f = &o.mappings()[i];
        let candidates = f.candidates(&pairs, current_year);
        for_each_binding(&candidates, |binding| {
            let bound: Vec<&Pair> = binding.iter().map(|&j| &pairs[j]).collect();
            let Some(outputs) = f.evaluate(&bound, current_year) else { return };
            let routes: Vec<Vec<usize>> = binding
                .iter()
                .map(|&j| (0..x.pairs[j].derivations.len()).collect())
                .collect();
            for_each_binding(&routes, |choice| {
                let mut d = Derivation::original();
                for (&j, &r) in binding.iter().zip(choice) {
                    let src = &x.pairs[j].derivations[r];
                    for rec in &src.provenance {
                        if !d.provenance.contains(rec) {
                            d.push(rec.clone());
                        }
                    }
                    d.generality_used = d.generality_used.max(src.generality_used);
                    d.stages = d.stages.union(src.stages);
                }
                let d = d.then(StageRecord::Mapping { function: f.name().to_string() });
                for out in &outputs {
                    produced.push((out.clone(), d.clone()));
                }
            });
        });
    }
    for (pair, d) in produced {
        if x.insert(pair.clone(), d.clone()) {
            added.push((pair, d));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_event, parse_subscription, Term};

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn ontology() -> Ontology {
        Ontology::from_json_str(
            r#"{
            "synonyms": [["university","school"], ["PhD","Ph.D."]],
            "hierarchy": [{"child":"car","parent":"vehicle"},{"child":"vehicle","parent":"conveyance"}],
            "mappings": [{"name":"prof_exp_from_grad","inputs":[{"attr":"graduation year","capture":1}],
                          "outputs":[{"attr":"professional experience","expr":"CURRENT_YEAR - $1"}]}]
        }"#,
        )
        .unwrap()
    }

    fn pair(a: &str, v: Value) -> Pair {
        Pair::new(t(a), v)
    }

    #[test]
    fn precision_json() {
        let p: PrecisionConfig =
            serde_json::from_str(r#"{"stages":["synonym","hierarchy","mapping"],"max_generality":2,"max_passes":4}"#)
                .unwrap();
        assert_eq!(p, PrecisionConfig::semantic().with_max_generality(Some(2)));
        let p: PrecisionConfig = serde_json::from_str(r#"{"stages":["synonym"]}"#).unwrap();
        assert_eq!(p, PrecisionConfig::synonyms_only());
        let p: PrecisionConfig = serde_json::from_str(r#"{"max_generality":"unbounded"}"#).unwrap();
        assert_eq!(p.max_generality, None);
        assert!(serde_json::from_str::<PrecisionConfig>(r#"{"stages":["hierarchy"]}"#).is_err());
        assert!(serde_json::from_str::<PrecisionConfig>(r#"{"max_passes":0}"#).is_err());
        let round: PrecisionConfig =
            serde_json::from_value(serde_json::to_value(PrecisionConfig::synonyms_only()).unwrap()).unwrap();
        assert_eq!(round, PrecisionConfig::synonyms_only());
    }

    #[test]
    fn normalize_examples() {
        let o = ontology();
        let s = parse_subscription(r#"{"predicates":[["school","=","Toronto"],["degree","=","Ph.D."]]}"#).unwrap();
        let n = normalize_subscription(&s, &o);
        assert_eq!(n.predicates[0].attribute(), &t("university"));
        assert_eq!(n.predicates[1].value(), &Value::symbol("phd").unwrap());
        let s = parse_subscription(r#"{"predicates":[["x",">=",3]]}"#).unwrap();
        assert_eq!(normalize_subscription(&s, &o), s);
    }

    #[test]
    fn golden_expansion() {
        let o = ontology();
        let e = parse_event(r#"{"pairs":[["school","Toronto"],["graduation year",1990]]}"#).unwrap();
        let x = expand_event(&e, &o, &PrecisionConfig::semantic(), 2003);
        assert!(x.contains(&pair("university", Value::symbol("toronto").unwrap())));
        let exp = x.get(&pair("professional experience", Value::number(13))).unwrap();
        assert_eq!(
            exp.derivations[0].provenance,
            vec![StageRecord::Mapping { function: "prof_exp_from_grad".into() }]
        );
        assert!(x.reached_fixpoint());
    }

    #[test]
    fn hierarchy_generalizes_attributes_and_values() {
        let o = ontology();
        let e = parse_event(r#"{"pairs":[["car","red"],["owns","car"]]}"#).unwrap();
        let cfg = PrecisionConfig::semantic().with_max_generality(Some(1));
        let x = expand_event(&e, &o, &cfg, 2003);
        assert!(x.contains(&pair("vehicle", Value::symbol("red").unwrap())));
        assert!(x.contains(&pair("owns", Value::symbol("vehicle").unwrap())));
        assert!(!x.contains(&pair("owns", Value::symbol("conveyance").unwrap())));

        let x = expand_event(&e, &o, &PrecisionConfig::semantic(), 2003);
        let d = &x.get(&pair("owns", Value::symbol("conveyance").unwrap())).unwrap().derivations;
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].generality_used, 2);
    }

    #[test]
    fn syntactic_mode_is_identity() {
        let o = ontology();
        let e = parse_event(r#"{"pairs":[["school","Toronto"],["graduation year",1990],["school","Toronto"]]}"#)
            .unwrap();
        let x = expand_event(&e, &o, &PrecisionConfig::syntactic(), 2003);
        assert_eq!(x.plain_pairs(), e.pairs[..2].to_vec());
        assert!(x.pairs().iter().all(|d| d.derivations == vec![Derivation::original()]));
    }

    #[test]
    fn hierarchy_fires_on_mapping_output() {
        let o = Ontology::from_json_str(
            r#"{"hierarchy":[{"child":"b","parent":"c"}],
                "mappings":[{"name":"a_to_b","inputs":[{"attr":"x","op":"=","value":"a"}],
                             "outputs":[{"attr":"x","expr":"'b'"}]}]}"#,
        )
        .unwrap();
        let e = parse_event(r#"{"pairs":[["x","a"]]}"#).unwrap();
        let one = expand_event(&e, &o, &PrecisionConfig::semantic().with_max_passes(1), 2003);
        assert!(one.contains(&pair("x", Value::symbol("b").unwrap())));
        assert!(!one.contains(&pair("x", Value::symbol("c").unwrap())));
        let two = expand_event(&e, &o, &PrecisionConfig::semantic().with_max_passes(2), 2003);
        let c = two.get(&pair("x", Value::symbol("c").unwrap())).unwrap();
        assert_eq!(c.derivations[0].stages(), [Stage::Hierarchy, Stage::Mapping].into_iter().collect::<StageSet>());
    }

    #[test]
    fn cyclic_mappings_stop_at_pass_bound() {
        let o = Ontology::from_json_str(
            r#"{"mappings":[
                {"name":"a_to_b","inputs":[{"attr":"a","capture":1}],"outputs":[{"attr":"b","expr":"$1 + 1"}]},
                {"name":"b_to_a","inputs":[{"attr":"b","capture":1}],"outputs":[{"attr":"a","expr":"$1 + 1"}]}]}"#,
        )
        .unwrap();
        let e = parse_event(r#"{"pairs":[["a",0]]}"#).unwrap();
        let x = expand_event(&e, &o, &PrecisionConfig::semantic().with_max_passes(6), 2003);
        assert!(!x.reached_fixpoint());
        assert_eq!(x.passes_run(), 6);
        assert_eq!(x.pairs().len(), 7);
    }

    #[test]
    fn admissibility_examples() {
        let s = parse_subscription(r#"{"predicates":[["a","=",1]],"precision":{"max_generality":1}}"#).unwrap();
        let mut d = Derivation::original();
        d.push(StageRecord::Hierarchy { from: t("x"), to: t("y"), hops: 2 });
        assert!(!admissible(&d, &s));

        let s = parse_subscription(r#"{"predicates":[["a","=",1]],"precision":{"stages":["synonym"]}}"#).unwrap();
        let d = Derivation::original().then(StageRecord::Mapping { function: "m".into() });
        assert!(!admissible(&d, &s));

        let s = parse_subscription(r#"{"predicates":[["a","=",1]],"precision":{"stages":[]}}"#).unwrap();
        assert!(admissible(&Derivation::original(), &s));
    }

    #[test]
    fn dominance_keeps_cheaper_routes() {
        let mut x = ExpandedEvent::new("e".into());
        let p = pair("a", Value::number(1));
        let mapped = Derivation::original().then(StageRecord::Mapping { function: "m".into() });
        assert!(x.insert(p.clone(), mapped));
        assert!(x.insert(p.clone(), Derivation::original()));
        assert_eq!(x.get(&p).unwrap().derivations, vec![Derivation::original()]);
        let again = Derivation::original().then(StageRecord::Mapping { function: "m2".into() });
        assert!(!x.insert(p, again));
    }
}
