//! Domain vocabulary and shape parameters for generated workloads.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use sempubsub_core::{Ontology, Term};

pub const JOBFINDER_SPEC: &str = include_str!("../data/jobfinder-domain.json");
/// Equality-only catalogue with wide pools, for index benchmarks.
pub const BENCH_SPEC: &str = include_str!("../data/bench-domain.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Free-form remark; ignored by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub attributes: Vec<AttributePool>,
    /// Predicates per subscription, inclusive.
    pub predicates: CountRange,
    /// Pairs per event, inclusive.
    pub pairs: CountRange,
    /// Chance of writing an alias instead of the root for a term that has aliases.
    pub synonym_usage: f64,
    /// Chance that a generated predicate is an equality test.
    pub equality_bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPool", into = "RawPool")]
pub struct AttributePool {
    pub name: String,
    pub aliases: Vec<String>,
    /// Term the target ontology is not expected to know.
    pub novel: bool,
    pub kind: PoolKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PoolKind {
    Symbol { values: Vec<TermSpec> },
    Number { min: i64, max: i64 },
    YearRange { min: i32, max: i32, max_span: i32, present_probability: f64 },
    Bool,
}

// Flat wire form. `#[serde(flatten)]` would buffer numbers, which the
// arbitrary-precision JSON backend then fails to read back as integers.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPool {
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    novel: bool,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_span: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    present_probability: Option<f64>,
}

impl TryFrom<RawPool> for AttributePool {
    type Error = String;

    fn try_from(r: RawPool) -> Result<AttributePool, String> {
        let need = |v: Option<i64>, field: &str| v.ok_or_else(|| format!("attribute {:?}: {} needs `{field}`", r.name, r.kind));
        let year = |v: i64| i32::try_from(v).map_err(|_| format!("attribute {:?}: year {v} out of range", r.name));
        let kind = match r.kind.as_str() {
            "symbol" => PoolKind::Symbol { values: r.values.clone().unwrap_or_default() },
            "number" => PoolKind::Number { min: need(r.min, "min")?, max: need(r.max, "max")? },
            "year_range" => PoolKind::YearRange {
                min: year(need(r.min, "min")?)?,
                max: year(need(r.max, "max")?)?,
                max_span: r.max_span.unwrap_or(10),
                present_probability: r.present_probability.unwrap_or(0.0),
            },
            "bool" => PoolKind::Bool,
            other => return Err(format!("attribute {:?}: unknown kind {other:?}", r.name)),
        };
        Ok(AttributePool { name: r.name, aliases: r.aliases, novel: r.novel, kind })
    }
}

impl From<AttributePool> for RawPool {
    fn from(a: AttributePool) -> RawPool {
        let mut r = RawPool { name: a.name, aliases: a.aliases, novel: a.novel, ..RawPool::default() };
        match a.kind {
            PoolKind::Symbol { values } => {
                r.kind = "symbol".into();
                r.values = Some(values);
            }
            PoolKind::Number { min, max } => {
                r.kind = "number".into();
                (r.min, r.max) = (Some(min), Some(max));
            }
            PoolKind::YearRange { min, max, max_span, present_probability } => {
                r.kind = "year_range".into();
                (r.min, r.max) = (Some(min.into()), Some(max.into()));
                r.max_span = Some(max_span);
                r.present_probability = Some(present_probability);
            }
            PoolKind::Bool => r.kind = "bool".into(),
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub term: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Distance below the most general term of its family; events favour
    /// deeper terms, subscriptions do not.
    #[serde(default)]
    pub depth: u32,
    #[serde(default)]
    pub novel: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> SpecError {
    SpecError::Invalid(msg.into())
}

impl DomainSpec {
    pub fn from_json_str(text: &str) -> Result<DomainSpec, SpecError> {
        let spec: DomainSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn jobfinder() -> DomainSpec {
        DomainSpec::from_json_str(JOBFINDER_SPEC).expect("bundled spec is valid")
    }

    pub fn bench_catalogue() -> DomainSpec {
        DomainSpec::from_json_str(BENCH_SPEC).expect("bundled spec is valid")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.attributes.is_empty() {
            return Err(invalid("attribute pool is empty"));
        }
        for (what, r) in [("predicates", self.predicates), ("pairs", self.pairs)] {
            if r.min == 0 || r.min > r.max {
                return Err(invalid(format!("{what}: need 1 <= min <= max, got {}..{}", r.min, r.max)));
            }
        }
        for (what, p) in [("synonym_usage", self.synonym_usage), ("equality_bias", self.equality_bias)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{what} must be a probability, got {p}")));
            }
        }
        for a in &self.attributes {
            if Term::new(&a.name).is_err() || a.aliases.iter().any(|x| Term::new(x).is_err()) {
                return Err(invalid(format!("attribute {:?}: blank name or alias", a.name)));
            }
            match &a.kind {
                PoolKind::Symbol { values } if values.is_empty() => {
                    return Err(invalid(format!("attribute {:?}: empty value pool", a.name)))
                }
                PoolKind::Symbol { values } => {
                    for v in values {
                        if Term::new(&v.term).is_err() || v.aliases.iter().any(|x| Term::new(x).is_err()) {
                            return Err(invalid(format!("attribute {:?}: blank value term", a.name)));
                        }
                    }
                }
                PoolKind::Number { min, max } if min > max => {
                    return Err(invalid(format!("attribute {:?}: empty number range", a.name)))
                }
                PoolKind::YearRange { min, max, max_span, present_probability }
                    if min > max || *max_span < 0 || !(0.0..=1.0).contains(present_probability) =>
                {
                    return Err(invalid(format!("attribute {:?}: bad year range pool", a.name)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Terms that are neither known to `ontology` nor marked novel, plus
    /// aliases the ontology files under a different root.
    pub fn unknown_terms(&self, ontology: &Ontology) -> Vec<String> {
        let mut known: BTreeSet<Term> = ontology.synonyms().terms().cloned().collect();
        known.extend(ontology.hierarchy().terms().into_iter().cloned());
        for m in ontology.mappings() {
            known.extend(m.inputs().iter().map(|i| i.attribute().clone()));
            known.extend(m.outputs().iter().map(|o| o.attribute.clone()));
        }
        let mut problems = Vec::new();
        let mut check = |term: &str, aliases: &[String], novel: bool| {
            let t = Term::new(term).expect("validated");
            if !novel && !known.contains(ontology.root_of(&t)) && !known.contains(&t) {
                problems.push(term.to_string());
            }
            for a in aliases {
                let at = Term::new(a).expect("validated");
                if ontology.root_of(&at) != ontology.root_of(&t) {
                    problems.push(format!("{a} (alias of {term})"));
                }
            }
        };
        for a in &self.attributes {
            check(&a.name, &a.aliases, a.novel);
            if let PoolKind::Symbol { values } = &a.kind {
                for v in values {
                    check(&v.term, &v.aliases, v.novel);
                }
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_spec_fits_bundled_ontology() {
        let spec = DomainSpec::jobfinder();
        assert_eq!(spec.unknown_terms(&sempubsub_core::demo::jobfinder_ontology()), Vec::<String>::new());
        assert_eq!(spec.predicates, CountRange { min: 1, max: 5 });
        assert_eq!(spec.pairs, CountRange { min: 2, max: 10 });
    }

    #[test]
    fn bench_catalogue_is_equality_only() {
        let spec = DomainSpec::bench_catalogue();
        assert!(spec.unknown_terms(&sempubsub_core::demo::jobfinder_ontology()).is_empty());
        assert_eq!(spec.equality_bias, 1.0);
        assert!(spec.attributes.iter().all(|a| matches!(a.kind, PoolKind::Symbol { .. } | PoolKind::Number { .. })));
    }

    #[test]
    fn unknown_and_misfiled_terms_reported() {
        let mut spec = DomainSpec::jobfinder();
        spec.attributes[0].novel = false;
        spec.attributes[1].aliases.push("skill".into());
        let mut problems = spec.unknown_terms(&sempubsub_core::demo::jobfinder_ontology());
        problems.sort();
        assert_eq!(problems, ["skill (alias of degree)"]);
        spec.attributes[0].name = "alma mater".into();
        assert!(spec.unknown_terms(&sempubsub_core::demo::jobfinder_ontology()).contains(&"alma mater".to_string()));
    }

    #[test]
    fn invalid_specs_rejected() {
        let base: serde_json::Value = serde_json::from_str(JOBFINDER_SPEC).unwrap();
        let reject = |patch: &dyn Fn(&mut serde_json::Value)| {
            let mut v = base.clone();
            patch(&mut v);
            DomainSpec::from_json_str(&v.to_string()).unwrap_err()
        };
        reject(&|v| v["attributes"] = serde_json::json!([]));
        reject(&|v| v["attributes"][0]["values"] = serde_json::json!([]));
        reject(&|v| v["predicates"]["min"] = 0.into());
        reject(&|v| v["pairs"] = serde_json::json!({"min": 5, "max": 2}));
        reject(&|v| v["synonym_usage"] = 1.5.into());
        reject(&|v| v["attributes"][5]["min"] = 100.into());
        reject(&|v| v["colour"] = "blue".into());
        reject(&|v| v["attributes"][5]["kind"] = "colour".into());
        reject(&|v| v["attributes"][5]["max"] = serde_json::Value::Null);
    }

    #[test]
    fn spec_round_trips() {
        let spec = DomainSpec::jobfinder();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(DomainSpec::from_json_str(&text).unwrap(), spec);
    }
}
