//! Domain knowledge used by the semantic stages: synonym sets, a concept
//! hierarchy, and mapping functions.
//!
//! Everything is keyed by hash maps built once at load time. Hierarchy and
//! mapping terms are rewritten to their synonym roots while loading, so the
//! later stages only ever see root terms. An [`Ontology`] is immutable after
//! [`OntologyBuilder::build`]; reloading means building a new one and
//! swapping it in.

pub mod expr;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::error::OntologyError;
use crate::model::{Op, Pair, Predicate, Term, Value, ValueKind};
pub use expr::{Expr, Operand};

/// Raw ontology file, as written by domain experts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyDocument {
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub synonyms: Vec<Vec<String>>,
    #[serde(default)]
    pub hierarchy: Vec<EdgeDocument>,
    #[serde(default)]
    pub mappings: Vec<MappingDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDocument {
    pub child: String,
    pub parent: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingDocument {
    pub name: String,
    pub inputs: Vec<InputDocument>,
    pub outputs: Vec<OutputDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDocument {
    pub attr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDocument {
    pub attr: String,
    pub expr: Json,
}

impl OntologyDocument {
    pub fn from_json_str(text: &str) -> Result<OntologyDocument, OntologyError> {
        serde_json::from_str(text).map_err(|e| OntologyError::Document(e.to_string()))
    }
}

/// Term to synonym-root table. Roots map to themselves implicitly.
#[derive(Clone, Debug, Default)]
pub struct SynonymTable {
    roots: HashMap<Term, Term>,
    domains: HashMap<Term, String>,
}

impl SynonymTable {
    pub fn root_of<'a>(&'a self, t: &'a Term) -> &'a Term {
        self.roots.get(t).unwrap_or(t)
    }

    /// Every term that appears in a synonym set, roots included.
    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.roots.keys()
    }

    pub fn domain_of(&self, t: &Term) -> Option<&str> {
        self.domains.get(t).map(String::as_str)
    }

    /// Root to its aliases (excluding the root itself), sorted.
    pub fn sets(&self) -> HashMap<&Term, Vec<&Term>> {
        let mut sets: HashMap<&Term, Vec<&Term>> = HashMap::new();
        for (term, root) in &self.roots {
            let entry = sets.entry(root).or_default();
            if term != root {
                entry.push(term);
            }
        }
        for aliases in sets.values_mut() {
            aliases.sort();
        }
        sets
    }
}

/// Is-a edges between root terms. Parents are more general than children.
#[derive(Clone, Debug, Default)]
pub struct ConceptHierarchy {
    parents: HashMap<Term, Vec<Term>>,
    /// Ancestor closure per term, ordered by (distance, term).
    closure: HashMap<Term, Vec<(Term, u32)>>,
    edge_domains: HashMap<(Term, Term), String>,
}

impl ConceptHierarchy {
    pub fn parents(&self, t: &Term) -> &[Term] {
        self.parents.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All terms that take part in some edge.
    pub fn terms(&self) -> BTreeSet<&Term> {
        let mut out: BTreeSet<&Term> = self.parents.keys().collect();
        out.extend(self.parents.values().flatten());
        out
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Term, &Term)> {
        self.parents.iter().flat_map(|(c, ps)| ps.iter().map(move |p| (c, p)))
    }

    pub fn edge_domain(&self, child: &Term, parent: &Term) -> Option<&str> {
        self.edge_domains
            .get(&(child.clone(), parent.clone()))
            .map(String::as_str)
    }

    /// Breadth-first ancestors of `t`, excluding `t`, each at its minimal
    /// hop distance, up to `max_hops` (`None` is unbounded).
    pub fn ancestors(&self, t: &Term, max_hops: Option<u32>) -> &[(Term, u32)] {
        let all = self.closure.get(t).map(Vec::as_slice).unwrap_or(&[]);
        match max_hops {
            None => all,
            Some(limit) => {
                let cut = all.partition_point(|(_, d)| *d <= limit);
                &all[..cut]
            }
        }
    }

    pub fn is_specialization_of(&self, a: &Term, b: &Term) -> bool {
        a == b || self.hops_between(a, b).is_some()
    }

    /// Minimal hop distance from `a` up to its ancestor `b`.
    pub fn hops_between(&self, a: &Term, b: &Term) -> Option<u32> {
        self.ancestors(a, None)
            .iter()
            .find(|(t, _)| t == b)
            .map(|(_, d)| *d)
    }

    fn build_closure(&mut self) {
        let mut closure = HashMap::with_capacity(self.parents.len());
        for start in self.parents.keys() {
            let mut seen: HashSet<&Term> = HashSet::from([start]);
            let mut queue: VecDeque<(&Term, u32)> = VecDeque::from([(start, 0)]);
            let mut found = Vec::new();
            while let Some((term, dist)) = queue.pop_front() {
                for parent in self.parents(term) {
                    if seen.insert(parent) {
                        found.push((parent.clone(), dist + 1));
                        queue.push_back((parent, dist + 1));
                    }
                }
            }
            found.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            closure.insert(start.clone(), found);
        }
        self.closure = closure;
    }

    fn find_cycle(&self) -> Option<Term> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let mut marks: HashMap<&Term, Mark> = HashMap::new();
        let mut starts: Vec<&Term> = self.parents.keys().collect();
        starts.sort();
        for start in starts {
            if marks.contains_key(start) {
                continue;
            }
            // Explicit stack of (term, next parent index).
            let mut stack: Vec<(&Term, usize)> = vec![(start, 0)];
            marks.insert(start, Mark::Active);
            while let Some((term, idx)) = stack.last_mut() {
                let parents = self.parents(term);
                if *idx < parents.len() {
                    let next = &parents[*idx];
                    *idx += 1;
                    match marks.get(next) {
                        Some(Mark::Active) => return Some(next.clone()),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(next, Mark::Active);
                            stack.push((next, 0));
                        }
                    }
                } else {
                    marks.insert(term, Mark::Done);
                    stack.pop();
                }
            }
        }
        None
    }
}

/// One input pattern of a mapping function.
#[derive(Clone, Debug, PartialEq)]
pub struct InputPattern {
    attribute: Term,
    constraint: Option<Predicate>,
    capture: Option<usize>,
    /// Set when the capture feeds arithmetic; the bound value must then be
    /// a number.
    numeric: bool,
}

impl InputPattern {
    pub fn attribute(&self) -> &Term {
        &self.attribute
    }

    pub fn capture(&self) -> Option<usize> {
        self.capture
    }

    pub fn constraint(&self) -> Option<&Predicate> {
        self.constraint.as_ref()
    }

    pub fn requires_number(&self) -> bool {
        self.numeric
    }

    pub fn accepts(&self, pair: &Pair, current_year: i32) -> bool {
        pair.attribute == self.attribute
            && (!self.numeric || pair.value.kind() == ValueKind::Number)
            && self
                .constraint
                .as_ref()
                .is_none_or(|c| c.holds_for(&pair.value, current_year))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub attribute: Term,
    pub expr: Expr,
}

/// A guarded many-to-many rewrite from input pairs to derived pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingFunction {
    name: String,
    domain: String,
    inputs: Vec<InputPattern>,
    outputs: Vec<OutputSpec>,
}

impl MappingFunction {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn inputs(&self) -> &[InputPattern] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[OutputSpec] {
        &self.outputs
    }

    /// For each input pattern, the indices of pairs it accepts.
    pub fn candidates(&self, pairs: &[Pair], current_year: i32) -> Vec<Vec<usize>> {
        self.inputs
            .iter()
            .map(|pattern| {
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| pattern.accepts(p, current_year))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    /// Evaluates the outputs for one binding, where `bound[i]` is the pair
    /// matched by input pattern `i`.
    pub fn evaluate(&self, bound: &[&Pair], current_year: i32) -> Option<Vec<Pair>> {
        debug_assert_eq!(bound.len(), self.inputs.len());
        let capture = |slot: usize| -> Option<Value> {
            self.inputs
                .iter()
                .position(|p| p.capture == Some(slot))
                .map(|i| bound[i].value.clone())
        };
        self.outputs
            .iter()
            .map(|out| {
                out.expr
                    .evaluate(&capture, current_year)
                    .map(|value| Pair::new(out.attribute.clone(), value))
            })
            .collect()
    }
}

impl fmt::Display for MappingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// The loaded knowledge base for one or more domains.
#[derive(Clone, Debug, Default)]
pub struct Ontology {
    synonyms: SynonymTable,
    hierarchy: ConceptHierarchy,
    mappings: Vec<MappingFunction>,
    /// Input attribute to the indices of mappings that use it.
    mapping_index: HashMap<Term, Vec<usize>>,
    domains: Vec<String>,
    warnings: Vec<String>,
    digest: String,
}

impl Ontology {
    pub fn empty() -> Ontology {
        OntologyBuilder::new().build().expect("empty ontology is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Ontology, OntologyError> {
        load_ontology(&[OntologyDocument::from_json_str(text)?])
    }

    pub fn synonyms(&self) -> &SynonymTable {
        &self.synonyms
    }

    pub fn hierarchy(&self) -> &ConceptHierarchy {
        &self.hierarchy
    }

    pub fn mappings(&self) -> &[MappingFunction] {
        &self.mappings
    }

    pub fn mapping(&self, name: &str) -> Option<&MappingFunction> {
        self.mappings.iter().find(|m| m.name == name)
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// SHA-256 over the canonical form of the source documents.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn root_of<'a>(&'a self, t: &'a Term) -> &'a Term {
        self.synonyms.root_of(t)
    }

    /// Normalizes a value: symbols are replaced by their root.
    pub fn root_value(&self, v: &Value) -> Value {
        match v {
            Value::Symbol(t) => Value::Symbol(self.root_of(t).clone()),
            other => other.clone(),
        }
    }

    pub fn ancestors(&self, t: &Term, max_hops: Option<u32>) -> &[(Term, u32)] {
        self.hierarchy.ancestors(t, max_hops)
    }

    pub fn is_specialization_of(&self, a: &Term, b: &Term) -> bool {
        self.hierarchy.is_specialization_of(a, b)
    }

    /// Indices (into [`Ontology::mappings`]) of mappings triggered by any of
    /// the attributes, in ascending order.
    pub fn triggered_by<'a>(&self, attributes: impl IntoIterator<Item = &'a Term>) -> BTreeSet<usize> {
        attributes
            .into_iter()
            .filter_map(|a| self.mapping_index.get(a))
            .flatten()
            .copied()
            .collect()
    }

    /// Mappings whose every input pattern is satisfied by some pair.
    pub fn applicable_mappings(&self, pairs: &[Pair], current_year: i32) -> Vec<&MappingFunction> {
        self.triggered_by(pairs.iter().map(|p| &p.attribute))
            .into_iter()
            .map(|i| &self.mappings[i])
            .filter(|m| {
                m.inputs
                    .iter()
                    .all(|pattern| pairs.iter().any(|p| pattern.accepts(p, current_year)))
            })
            .collect()
    }

    /// Derived pairs of `f`, one output set per distinct binding of input
    /// patterns to pairs. Inputs are not consumed.
    pub fn apply_mapping(&self, f: &MappingFunction, pairs: &[Pair], current_year: i32) -> Vec<Vec<Pair>> {
        let candidates = f.candidates(pairs, current_year);
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for_each_binding(&candidates, |binding| {
            let bound: Vec<&Pair> = binding.iter().map(|&i| &pairs[i]).collect();
            if let Some(derived) = f.evaluate(&bound, current_year) {
                if seen.insert(derived.clone()) {
                    out.push(derived);
                }
            }
        });
        out
    }
}

/// Calls `visit` with every element of the cartesian product of
/// `candidates`. Nothing is visited if any list is empty.
pub fn for_each_binding(candidates: &[Vec<usize>], mut visit: impl FnMut(&[usize])) {
    if candidates.iter().any(Vec::is_empty) {
        return;
    }
    let mut cursor = vec![0usize; candidates.len()];
    let mut binding: Vec<usize> = candidates.iter().map(|c| c[0]).collect();
    loop {
        visit(&binding);
        let mut pos = candidates.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < candidates[pos].len() {
                binding[pos] = candidates[pos][cursor[pos]];
                break;
            }
            cursor[pos] = 0;
            binding[pos] = candidates[pos][0];
        }
    }
}

/// Accumulates documents from any number of domains and validates them as
/// a whole. Synonym sets from every document are merged first, so a
/// hierarchy edge in one domain may use an alias defined in another.
#[derive(Clone, Debug, Default)]
pub struct OntologyBuilder {
    documents: Vec<OntologyDocument>,
}

impl OntologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, doc: OntologyDocument) -> &mut Self {
        self.documents.push(doc);
        self
    }

    pub fn add_json(&mut self, text: &str) -> Result<&mut Self, OntologyError> {
        let doc = OntologyDocument::from_json_str(text)?;
        Ok(self.add_document(doc))
    }

    pub fn build(&self) -> Result<Ontology, OntologyError> {
        load_ontology(&self.documents)
    }
}

fn term(entry: &str, text: &str) -> Result<Term, OntologyError> {
    Term::new(text).map_err(|e| OntologyError::Term { entry: entry.to_string(), message: e.to_string() })
}

/// Validates and indexes a set of ontology documents.
pub fn load_ontology(documents: &[OntologyDocument]) -> Result<Ontology, OntologyError> {
    let mut synonyms = SynonymTable::default();
    for doc in documents {
        for set in &doc.synonyms {
            let Some(first) = set.first() else { continue };
            let root = term("synonyms", first)?;
            let mut members = Vec::with_capacity(set.len());
            for text in set {
                members.push(term("synonyms", text)?);
            }
            for member in members {
                match synonyms.roots.get(&member) {
                    Some(existing) if *existing == root => {}
                    Some(existing) => {
                        return Err(OntologyError::OverlappingSynonyms {
                            term: member.to_string(),
                            existing_root: existing.to_string(),
                        })
                    }
                    None => {
                        synonyms.domains.insert(member.clone(), doc.domain.clone());
                        synonyms.roots.insert(member, root.clone());
                    }
                }
            }
        }
    }
    // A root listed as an alias elsewhere would make root_of non-idempotent;
    // the overlap check above already rejects that, this is the invariant.
    debug_assert!(synonyms
        .roots
        .values()
        .all(|r| synonyms.root_of(r) == r));

    let root = |entry: &str, text: &str| -> Result<Term, OntologyError> {
        let t = term(entry, text)?;
        Ok(synonyms.root_of(&t).clone())
    };

    let mut hierarchy = ConceptHierarchy::default();
    for doc in documents {
        for edge in &doc.hierarchy {
            let child = root("hierarchy", &edge.child)?;
            let parent = root("hierarchy", &edge.parent)?;
            if child == parent {
                return Err(OntologyError::Cycle(child.to_string()));
            }
            let parents = hierarchy.parents.entry(child.clone()).or_default();
            if !parents.contains(&parent) {
                parents.push(parent.clone());
                parents.sort();
            }
            hierarchy.edge_domains.insert((child, parent), doc.domain.clone());
        }
    }
    if let Some(t) = hierarchy.find_cycle() {
        return Err(OntologyError::Cycle(t.to_string()));
    }
    hierarchy.build_closure();

    let mut mappings = Vec::new();
    let mut names = HashSet::new();
    for doc in documents {
        for raw in &doc.mappings {
            let mapping = load_mapping(raw, &doc.domain, &synonyms)?;
            if !names.insert(mapping.name.clone()) {
                return Err(OntologyError::InvalidMapping {
                    mapping: mapping.name,
                    message: "duplicate mapping name".into(),
                });
            }
            mappings.push(mapping);
        }
    }
    let mut mapping_index: HashMap<Term, Vec<usize>> = HashMap::new();
    for (i, m) in mappings.iter().enumerate() {
        for pattern in &m.inputs {
            let entry = mapping_index.entry(pattern.attribute.clone()).or_default();
            if entry.last() != Some(&i) {
                entry.push(i);
            }
        }
    }

    let warnings = collisions(&mappings);
    for w in &warnings {
        warn!("{w}");
    }

    let mut domains: Vec<String> = documents.iter().map(|d| d.domain.clone()).collect();
    domains.dedup();

    let mut hasher = Sha256::new();
    for doc in documents {
        hasher.update(serde_json::to_vec(doc).expect("document serializes"));
    }
    let digest = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    Ok(Ontology { synonyms, hierarchy, mappings, mapping_index, domains, warnings, digest })
}

fn load_mapping(raw: &MappingDocument, domain: &str, synonyms: &SynonymTable) -> Result<MappingFunction, OntologyError> {
    let name = raw.name.clone();
    let invalid = |message: String| OntologyError::InvalidMapping { mapping: name.clone(), message };
    if raw.inputs.is_empty() {
        return Err(invalid("no inputs".into()));
    }
    if raw.outputs.is_empty() {
        return Err(invalid("no outputs".into()));
    }
    let root_term = |text: &str| -> Result<Term, OntologyError> {
        let t = term(&name, text)?;
        Ok(synonyms.root_of(&t).clone())
    };
    let root_value = |v: Value| match v {
        Value::Symbol(t) => Value::Symbol(synonyms.root_of(&t).clone()),
        other => other,
    };

    let mut inputs = Vec::with_capacity(raw.inputs.len());
    for input in &raw.inputs {
        let attribute = root_term(&input.attr)?;
        let constraint = match (&input.op, &input.value) {
            (None, None) => None,
            (op, Some(value)) => {
                let op = match op.as_deref().unwrap_or("=") {
                    "=" => Op::Eq,
                    "in" => Op::InRange,
                    other => return Err(invalid(format!("input operator {other:?} must be \"=\" or \"in\""))),
                };
                let value = Value::from_json(value).map_err(|e| invalid(e.to_string()))?;
                Some(
                    Predicate::new(attribute.clone(), op, root_value(value))
                        .map_err(|e| invalid(e.to_string()))?,
                )
            }
            (Some(_), None) => return Err(invalid(format!("input {} has an operator but no value", input.attr))),
        };
        inputs.push(InputPattern { attribute, constraint, capture: input.capture, numeric: false });
    }

    let mut outputs = Vec::with_capacity(raw.outputs.len());
    for output in &raw.outputs {
        let attribute = root_term(&output.attr)?;
        let mut expr = match &output.expr {
            Json::String(text) => Expr::parse(text),
            Json::Number(_) | Json::Bool(_) => Value::from_json(&output.expr)
                .map(Expr::literal)
                .map_err(|e| e.to_string()),
            other => Err(format!("unsupported expression {other}")),
        }
        .map_err(|message| OntologyError::InvalidExpr { mapping: name.clone(), message })?;
        for op in expr.operands_mut() {
            if let Operand::Literal(v) = op {
                *v = root_value(v.clone());
            }
        }
        outputs.push(OutputSpec { attribute, expr });
    }

    for out in &outputs {
        for slot in out.expr.captures() {
            let bound = inputs.iter().filter(|p| p.capture == Some(slot)).count();
            if bound != 1 {
                return Err(OntologyError::UnboundCapture { mapping: name.clone(), slot });
            }
        }
    }
    for out in &outputs {
        if !out.expr.is_arithmetic() {
            continue;
        }
        let kind_of = |slot: usize| {
            inputs
                .iter()
                .find(|p| p.capture == Some(slot))
                .and_then(|p| p.constraint.as_ref())
                .map(|c| c.value().kind())
        };
        out.expr
            .check_types(kind_of)
            .map_err(|message| OntologyError::InvalidExpr { mapping: name.clone(), message })?;
        for slot in out.expr.captures() {
            if let Some(p) = inputs.iter_mut().find(|p| p.capture == Some(slot)) {
                p.numeric = true;
            }
        }
    }

    Ok(MappingFunction { name: raw.name.clone(), domain: domain.to_string(), inputs, outputs })
}

/// Terms used both as a mapping attribute and as a symbolic mapping value.
fn collisions(mappings: &[MappingFunction]) -> Vec<String> {
    let mut attributes = HashSet::new();
    let mut symbols = HashSet::new();
    for m in mappings {
        for p in &m.inputs {
            attributes.insert(p.attribute.clone());
            if let Some(Value::Symbol(t)) = p.constraint.as_ref().map(Predicate::value) {
                symbols.insert(t.clone());
            }
        }
        for o in &m.outputs {
            attributes.insert(o.attribute.clone());
            for op in o.expr.operands() {
                if let Operand::Literal(Value::Symbol(t)) = op {
                    symbols.insert(t.clone());
                }
            }
        }
    }
    let mut both: Vec<_> = attributes.intersection(&symbols).collect();
    both.sort();
    both.into_iter()
        .map(|t| format!("term {t:?} is used both as an attribute and as a value"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn load(json: &str) -> Result<Ontology, OntologyError> {
        Ontology::from_json_str(json)
    }

    const JOBS: &str = r#"{
        "domain": "jobs",
        "synonyms": [["university","school","college"], ["car","automobile"], ["PhD","Ph.D."]],
        "hierarchy": [{"child":"car","parent":"vehicle"}, {"child":"truck","parent":"vehicle"},
                      {"child":"vehicle","parent":"conveyance"}],
        "mappings": [
            {"name":"prof_exp_from_grad",
             "inputs":[{"attr":"graduation year","capture":1}],
             "outputs":[{"attr":"professional experience","expr":"CURRENT_YEAR - $1"}]},
            {"name":"mainframe_developer",
             "inputs":[{"attr":"skill","op":"=","value":"COBOL programming"},
                       {"attr":"period","op":"in","value":"1960-1980"}],
             "outputs":[{"attr":"job title","expr":"'mainframe developer'"}]}
        ]
    }"#;

    #[test]
    fn synonym_roots() {
        let o = load(JOBS).unwrap();
        assert_eq!(o.root_of(&t("school")), &t("university"));
        assert_eq!(o.root_of(&t("automobile")), &t("car"));
        assert_eq!(o.root_of(&t("unknown-term")), &t("unknown-term"));
        for term in o.synonyms().terms() {
            let r = o.root_of(term);
            assert_eq!(o.root_of(r), r);
        }
    }

    #[test]
    fn hierarchy_queries() {
        let o = load(JOBS).unwrap();
        assert_eq!(
            o.ancestors(&t("car"), None),
            &[(t("vehicle"), 1), (t("conveyance"), 2)]
        );
        assert_eq!(o.ancestors(&t("car"), Some(1)), &[(t("vehicle"), 1)]);
        assert!(o.ancestors(&t("car"), Some(0)).is_empty());
        assert!(o.ancestors(&t("conveyance"), None).is_empty());
        assert!(o.is_specialization_of(&t("car"), &t("vehicle")));
        assert!(!o.is_specialization_of(&t("vehicle"), &t("car")));
        assert!(o.is_specialization_of(&t("x"), &t("x")));
    }

    #[test]
    fn hierarchy_uses_roots() {
        let o = load(
            r#"{"synonyms":[["car","automobile"]],"hierarchy":[{"child":"Automobile","parent":"vehicle"}]}"#,
        )
        .unwrap();
        assert_eq!(o.ancestors(&t("car"), None), &[(t("vehicle"), 1)]);
        assert!(o.ancestors(&t("automobile"), None).is_empty());
    }

    #[test]
    fn dag_keeps_minimal_distance() {
        let o = load(
            r#"{"hierarchy":[{"child":"a","parent":"b"},{"child":"b","parent":"c"},{"child":"a","parent":"c"}]}"#,
        )
        .unwrap();
        assert_eq!(o.ancestors(&t("a"), None), &[(t("b"), 1), (t("c"), 1)]);
    }

    #[test]
    fn load_errors_name_the_entry() {
        let err = load(r#"{"hierarchy":[{"child":"a","parent":"b"},{"child":"b","parent":"a"}]}"#).unwrap_err();
        assert!(matches!(err, OntologyError::Cycle(_)), "{err}");

        let err = load(r#"{"synonyms":[["school","university"]],"hierarchy":[{"child":"university","parent":"school"}]}"#)
            .unwrap_err();
        assert!(matches!(err, OntologyError::Cycle(_)), "{err}");

        let err = load(r#"{"synonyms":[["a","b"],["c","b"]]}"#).unwrap_err();
        assert_eq!(
            err,
            OntologyError::OverlappingSynonyms { term: "b".into(), existing_root: "a".into() }
        );

        let err = load(
            r#"{"mappings":[{"name":"m","inputs":[{"attr":"x","capture":1}],"outputs":[{"attr":"y","expr":"$2"}]}]}"#,
        )
        .unwrap_err();
        assert_eq!(err, OntologyError::UnboundCapture { mapping: "m".into(), slot: 2 });

        let err = load(r#"{"mappings":[{"name":"m","inputs":[{"attr":"x","capture":1},{"attr":"z","capture":1}],
                           "outputs":[{"attr":"y","expr":"$1"}]}]}"#)
        .unwrap_err();
        assert_eq!(err, OntologyError::UnboundCapture { mapping: "m".into(), slot: 1 });

        let err = load(r#"{"mappings":[{"name":"typed","inputs":[{"attr":"x","op":"=","value":"abc","capture":1}],
                           "outputs":[{"attr":"y","expr":"$1 + 1"}]}]}"#)
        .unwrap_err();
        assert!(matches!(err, OntologyError::InvalidExpr { ref mapping, .. } if mapping == "typed"), "{err}");

        let err = load(r#"{"mappings":[{"name":"lit","inputs":[{"attr":"x"}],"outputs":[{"attr":"y","expr":"'a' - 1"}]}]}"#)
            .unwrap_err();
        assert!(matches!(err, OntologyError::InvalidExpr { .. }));
    }

    #[test]
    fn arithmetic_captures_require_numbers() {
        let o = load(JOBS).unwrap();
        let grad = o.mapping("prof_exp_from_grad").unwrap();
        assert!(grad.inputs()[0].requires_number());
        let pairs = vec![Pair::new(t("graduation year"), Value::symbol("unknown").unwrap())];
        assert!(o.applicable_mappings(&pairs, 2003).is_empty());
    }

    #[test]
    fn applicable_and_apply() {
        let o = load(JOBS).unwrap();
        let pairs = vec![Pair::new(t("graduation year"), Value::number(1993))];
        let found: Vec<_> = o.applicable_mappings(&pairs, 2003).iter().map(|m| m.name()).collect();
        assert_eq!(found, vec!["prof_exp_from_grad"]);
        let m = o.mapping("prof_exp_from_grad").unwrap();
        assert_eq!(
            o.apply_mapping(m, &pairs, 2003),
            vec![vec![Pair::new(t("professional experience"), Value::number(10))]]
        );
        let pairs = vec![Pair::new(t("graduation year"), Value::number(1990))];
        assert_eq!(
            o.apply_mapping(m, &pairs, 2003),
            vec![vec![Pair::new(t("professional experience"), Value::number(13))]]
        );

        let pairs = vec![
            Pair::new(t("skill"), Value::symbol("COBOL programming").unwrap()),
            Pair::new(t("period"), Value::from_text("1960-1980").unwrap()),
        ];
        let found: Vec<_> = o.applicable_mappings(&pairs, 2003).iter().map(|m| m.name()).collect();
        assert_eq!(found, vec!["mainframe_developer"]);
        let m = o.mapping("mainframe_developer").unwrap();
        assert_eq!(
            o.apply_mapping(m, &pairs, 2003),
            vec![vec![Pair::new(t("job title"), Value::symbol("mainframe developer").unwrap())]]
        );

        assert!(o.applicable_mappings(&[], 2003).is_empty());
    }

    #[test]
    fn one_output_set_per_binding() {
        let o = load(JOBS).unwrap();
        let m = o.mapping("prof_exp_from_grad").unwrap();
        let pairs = vec![
            Pair::new(t("graduation year"), Value::number(1990)),
            Pair::new(t("graduation year"), Value::number(2000)),
            Pair::new(t("graduation year"), Value::number(1990)),
        ];
        let out = o.apply_mapping(m, &pairs, 2003);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn mapping_terms_are_normalized() {
        let o = load(
            r#"{"synonyms":[["university","school"],["toronto","uoft"]],
                "mappings":[{"name":"m","inputs":[{"attr":"school","op":"=","value":"UofT"}],
                             "outputs":[{"attr":"school","expr":"'uoft'"}]}]}"#,
        )
        .unwrap();
        let m = o.mapping("m").unwrap();
        assert_eq!(m.inputs()[0].attribute(), &t("university"));
        assert_eq!(m.inputs()[0].constraint().unwrap().value(), &Value::symbol("toronto").unwrap());
        assert_eq!(m.outputs()[0].attribute, t("university"));
        assert_eq!(m.outputs()[0].expr, Expr::literal(Value::symbol("toronto").unwrap()));
    }

    #[test]
    fn collision_warning() {
        let o = load(
            r#"{"mappings":[{"name":"m","inputs":[{"attr":"skill","op":"=","value":"java"}],
                             "outputs":[{"attr":"java","expr":"true"}]}]}"#,
        )
        .unwrap();
        assert_eq!(o.warnings().len(), 1);
        assert!(o.warnings()[0].contains("java"));
    }

    #[test]
    fn multi_domain_merge() {
        let mut b = OntologyBuilder::new();
        b.add_json(r#"{"domain":"jobs","synonyms":[["university","school"]]}"#).unwrap();
        b.add_json(r#"{"domain":"cars","hierarchy":[{"child":"School","parent":"institution"}]}"#).unwrap();
        let o = b.build().unwrap();
        assert_eq!(o.domains(), &["jobs".to_string(), "cars".to_string()]);
        assert_eq!(o.ancestors(&t("university"), None), &[(t("institution"), 1)]);
        assert_eq!(o.hierarchy().edge_domain(&t("university"), &t("institution")), Some("cars"));
        assert_eq!(o.digest().len(), 64);
    }

    #[test]
    fn index_is_inverted_inputs() {
        let o = load(JOBS).unwrap();
        for (i, m) in o.mappings().iter().enumerate() {
            for p in m.inputs() {
                assert!(o.triggered_by([p.attribute()]).contains(&i));
            }
        }
        assert!(o.triggered_by([&t("professional experience")]).is_empty());
    }

    #[test]
    fn binding_product() {
        let mut seen = Vec::new();
        for_each_binding(&[vec![0, 1], vec![2], vec![3, 4]], |b| seen.push(b.to_vec()));
        assert_eq!(seen, vec![vec![0, 2, 3], vec![0, 2, 4], vec![1, 2, 3], vec![1, 2, 4]]);
        let mut count = 0;
        for_each_binding(&[vec![0], vec![]], |_| count += 1);
        assert_eq!(count, 0);
    }
}
