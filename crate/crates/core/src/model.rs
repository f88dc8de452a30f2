//! Events, subscriptions, typed values and predicate evaluation.
//!
//! Every other module works on these types. They are immutable once built
//! and the evaluation functions are pure, so they can be shared freely
//! between matching threads.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value as Json;

use crate::error::ParseError;
use crate::pipeline::PrecisionConfig;

/// A case-folded attribute name or symbolic value.
///
/// Attribute names and symbols share one term space, so the same type is
/// used for both. Construction trims surrounding whitespace and lowercases;
/// equality is exact on the folded text.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(Arc<str>);

impl Term {
    pub fn new(text: &str) -> Result<Term, ParseError> {
        let folded = text.trim().to_lowercase();
        if folded.is_empty() {
            return Err(ParseError::invalid("term", "empty term"));
        }
        Ok(Term(folded.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Term {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Term::new(s)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Term::new(&text).map_err(serde::de::Error::custom)
    }
}

/// Upper bound of a [`YearRange`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RangeEnd {
    Year(i32),
    /// Open-ended range, resolved against the configured current year.
    Present,
}

/// An inclusive span of years such as `1994-1997` or `1999-present`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YearRange {
    start: i32,
    end: RangeEnd,
}

impl YearRange {
    pub fn new(start: i32, end: RangeEnd) -> Result<YearRange, ParseError> {
        if let RangeEnd::Year(end) = end {
            if start > end {
                return Err(ParseError::invalid(
                    "value",
                    format!("year range {start}-{end} ends before it starts"),
                ));
            }
        }
        Ok(YearRange { start, end })
    }

    pub fn start(&self) -> i32 {
        self.start
    }

    pub fn end(&self) -> RangeEnd {
        self.end
    }

    pub fn resolved_end(&self, current_year: i32) -> i32 {
        match self.end {
            RangeEnd::Year(y) => y,
            RangeEnd::Present => current_year,
        }
    }

    /// Whether `inner` lies entirely within `self`.
    pub fn contains(&self, inner: &YearRange, current_year: i32) -> bool {
        self.start <= inner.start && inner.resolved_end(current_year) <= self.resolved_end(current_year)
    }

    /// Recognizes `YYYY-YYYY` and `YYYY-present`.
    pub fn parse(text: &str) -> Option<Result<YearRange, ParseError>> {
        static PATTERN: OnceLock<Regex> = OnceLock::new();
        let re = PATTERN.get_or_init(|| {
            Regex::new(r"(?i)^\s*(\d{4})\s*-\s*(\d{4}|present)\s*$").expect("static regex")
        });
        let caps = re.captures(text)?;
        let start: i32 = caps[1].parse().ok()?;
        let end = if caps[2].eq_ignore_ascii_case("present") {
            RangeEnd::Present
        } else {
            RangeEnd::Year(caps[2].parse().ok()?)
        };
        Some(YearRange::new(start, end))
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.end {
            RangeEnd::Year(end) => write!(f, "{}-{}", self.start, end),
            RangeEnd::Present => write!(f, "{}-present", self.start),
        }
    }
}

/// The value side of an attribute-value pair.
///
/// Numbers are exact decimals stored in normalized form, so `4`, `4.0` and
/// `4.00` compare and hash identically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Symbol(Term),
    Number(Decimal),
    Bool(bool),
    YearRange(YearRange),
}

impl Value {
    pub fn number(n: impl Into<Decimal>) -> Value {
        Value::Number(n.into().normalize())
    }

    pub fn symbol(text: &str) -> Result<Value, ParseError> {
        Term::new(text).map(Value::Symbol)
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Symbol(_) => ValueKind::Symbol,
            Value::Number(_) => ValueKind::Number,
            Value::Bool(_) => ValueKind::Bool,
            Value::YearRange(_) => ValueKind::YearRange,
        }
    }

    pub fn as_symbol(&self) -> Option<&Term> {
        match self {
            Value::Symbol(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Coerces a string literal: year ranges are recognized, everything else
    /// becomes a symbol.
    pub fn from_text(text: &str) -> Result<Value, ParseError> {
        match YearRange::parse(text) {
            Some(range) => range.map(Value::YearRange),
            None => Value::symbol(text),
        }
    }

    pub fn from_json(json: &Json) -> Result<Value, ParseError> {
        match json {
            Json::Bool(b) => Ok(Value::Bool(*b)),
            Json::String(s) => Value::from_text(s),
            Json::Number(n) => parse_decimal(&n.to_string()).map(Value::number),
            other => Err(ParseError::invalid(
                "value",
                format!("unsupported value {other}"),
            )),
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Symbol(t) => Json::String(t.to_string()),
            Value::Bool(b) => Json::Bool(*b),
            Value::YearRange(r) => Json::String(r.to_string()),
            Value::Number(n) => n
                .to_string()
                .parse::<serde_json::Number>()
                .map(Json::Number)
                .unwrap_or_else(|_| Json::String(n.to_string())),
        }
    }
}

pub(crate) fn parse_decimal(text: &str) -> Result<Decimal, ParseError> {
    Decimal::from_str(text)
        .or_else(|_| Decimal::from_scientific(text))
        .map_err(|e| ParseError::invalid("value", format!("number {text}: {e}")))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Symbol(t) => write!(f, "{t}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::YearRange(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Symbol,
    Number,
    Bool,
    YearRange,
}

/// An attribute-value pair of an event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub attribute: Term,
    pub value: Value,
}

impl Pair {
    pub fn new(attribute: Term, value: Value) -> Pair {
        Pair { attribute, value }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.attribute, self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Eq,
    Neq,
    Ge,
    Le,
    Gt,
    Lt,
    InRange,
}

impl Op {
    pub const ALL: [Op; 7] = [Op::Eq, Op::Neq, Op::Ge, Op::Le, Op::Gt, Op::Lt, Op::InRange];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Neq => "!=",
            Op::Ge => ">=",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Lt => "<",
            Op::InRange => "in",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, Op::Ge | Op::Le | Op::Gt | Op::Lt)
    }
}

impl FromStr for Op {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .into_iter()
            .find(|op| op.as_str() == s.trim())
            .ok_or_else(|| ParseError::invalid("op", format!("unknown operator {s:?}")))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single `(attribute, operator, value)` constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    attribute: Term,
    op: Op,
    value: Value,
}

impl Predicate {
    /// Ordering operators need a number, `in` needs a year range.
    pub fn new(attribute: Term, op: Op, value: Value) -> Result<Predicate, ParseError> {
        let ok = match op {
            Op::Eq | Op::Neq => true,
            Op::Ge | Op::Le | Op::Gt | Op::Lt => value.kind() == ValueKind::Number,
            Op::InRange => value.kind() == ValueKind::YearRange,
        };
        if !ok {
            return Err(ParseError::invalid(
                "predicate",
                format!("operator {op} cannot take value {value}"),
            ));
        }
        Ok(Predicate { attribute, op, value })
    }

    pub fn attribute(&self) -> &Term {
        &self.attribute
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    /// Same predicate with its terms replaced. The operator/value typing is
    /// unchanged because only symbols are ever rewritten.
    pub(crate) fn with_terms(&self, attribute: Term, value: Value) -> Predicate {
        debug_assert_eq!(self.value.kind(), value.kind());
        Predicate { attribute, op: self.op, value }
    }

    /// The operator relation between an event value and this predicate's
    /// value, ignoring attributes.
    pub fn holds_for(&self, candidate: &Value, current_year: i32) -> bool {
        match (self.op, candidate, &self.value) {
            (Op::Eq, c, v) => c == v,
            (Op::Neq, c, v) => c.kind() == v.kind() && c != v,
            (Op::Ge, Value::Number(c), Value::Number(v)) => c >= v,
            (Op::Le, Value::Number(c), Value::Number(v)) => c <= v,
            (Op::Gt, Value::Number(c), Value::Number(v)) => c > v,
            (Op::Lt, Value::Number(c), Value::Number(v)) => c < v,
            (Op::InRange, Value::YearRange(c), Value::YearRange(v)) => v.contains(c, current_year),
            _ => false,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.attribute, self.op, self.value)
    }
}

/// Total: mismatched attributes or value types simply yield `false`.
pub fn evaluate_predicate(p: &Predicate, pair: &Pair, current_year: i32) -> bool {
    p.attribute == pair.attribute && p.holds_for(&pair.value, current_year)
}

/// A published event: a flat, ordered list of pairs. Attributes may repeat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub event_id: String,
    pub pairs: Vec<Pair>,
    /// Milliseconds since the Unix epoch, stamped by the broker.
    pub received_at: Option<u64>,
}

impl Event {
    pub fn new(event_id: impl Into<String>, pairs: Vec<Pair>) -> Result<Event, ParseError> {
        if pairs.is_empty() {
            return Err(ParseError::EmptyEvent);
        }
        Ok(Event { event_id: event_id.into(), pairs, received_at: None })
    }

    pub fn from_json(json: &Json) -> Result<Event, ParseError> {
        let obj = json
            .as_object()
            .ok_or_else(|| ParseError::invalid("$", "event must be an object"))?;
        let event_id = optional_id(obj.get("event_id"), "event_id")?;
        let raw_pairs = obj
            .get("pairs")
            .and_then(Json::as_array)
            .ok_or_else(|| ParseError::invalid("pairs", "missing pairs array"))?;
        let mut pairs = Vec::with_capacity(raw_pairs.len());
        for (i, raw) in raw_pairs.iter().enumerate() {
            pairs.push(parse_pair(raw).map_err(|e| e.at(format!("pairs[{i}]")))?);
        }
        let received_at = match obj.get("received_at") {
            None | Some(Json::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| ParseError::invalid("received_at", "expected integer"))?,
            ),
        };
        let mut event = Event::new(event_id, pairs)?;
        event.received_at = received_at;
        Ok(event)
    }

    pub fn to_json(&self) -> Json {
        let pairs: Vec<Json> = self
            .pairs
            .iter()
            .map(|p| Json::Array(vec![Json::String(p.attribute.to_string()), p.value.to_json()]))
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("event_id".into(), Json::String(self.event_id.clone()));
        obj.insert("pairs".into(), Json::Array(pairs));
        if let Some(at) = self.received_at {
            obj.insert("received_at".into(), Json::from(at));
        }
        Json::Object(obj)
    }
}

/// A conjunctive subscription.
#[derive(Clone, Debug, PartialEq)]
pub struct Subscription {
    pub sub_id: String,
    pub predicates: Vec<Predicate>,
    pub subscriber: String,
    /// `None` means the broker default applies.
    pub precision: Option<PrecisionConfig>,
}

impl Subscription {
    pub fn new(
        sub_id: impl Into<String>,
        subscriber: impl Into<String>,
        predicates: Vec<Predicate>,
    ) -> Result<Subscription, ParseError> {
        if predicates.is_empty() {
            return Err(ParseError::EmptySubscription);
        }
        Ok(Subscription {
            sub_id: sub_id.into(),
            predicates,
            subscriber: subscriber.into(),
            precision: None,
        })
    }

    pub fn with_precision(mut self, precision: PrecisionConfig) -> Subscription {
        self.precision = Some(precision);
        self
    }

    pub fn from_json(json: &Json) -> Result<Subscription, ParseError> {
        let obj = json
            .as_object()
            .ok_or_else(|| ParseError::invalid("$", "subscription must be an object"))?;
        let sub_id = optional_id(obj.get("sub_id"), "sub_id")?;
        let subscriber = match obj.get("subscriber") {
            None | Some(Json::Null) => String::new(),
            Some(Json::String(s)) => s.clone(),
            Some(_) => return Err(ParseError::invalid("subscriber", "expected string")),
        };
        let raw = obj
            .get("predicates")
            .and_then(Json::as_array)
            .ok_or_else(|| ParseError::invalid("predicates", "missing predicates array"))?;
        let mut predicates = Vec::with_capacity(raw.len());
        for (i, p) in raw.iter().enumerate() {
            predicates.push(parse_predicate(p).map_err(|e| e.at(format!("predicates[{i}]")))?);
        }
        let mut sub = Subscription::new(sub_id, subscriber, predicates)?;
        sub.precision = match obj.get("precision") {
            None | Some(Json::Null) => None,
            Some(p) => Some(
                serde_json::from_value(p.clone())
                    .map_err(|e| ParseError::invalid("precision", e.to_string()))?,
            ),
        };
        Ok(sub)
    }

    pub fn to_json(&self) -> Json {
        let predicates: Vec<Json> = self
            .predicates
            .iter()
            .map(|p| {
                Json::Array(vec![
                    Json::String(p.attribute.to_string()),
                    Json::String(p.op.as_str().to_string()),
                    p.value.to_json(),
                ])
            })
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("sub_id".into(), Json::String(self.sub_id.clone()));
        obj.insert("subscriber".into(), Json::String(self.subscriber.clone()));
        obj.insert("predicates".into(), Json::Array(predicates));
        if let Some(precision) = &self.precision {
            obj.insert(
                "precision".into(),
                serde_json::to_value(precision).expect("precision serializes"),
            );
        }
        Json::Object(obj)
    }
}

fn optional_id(raw: Option<&Json>, field: &str) -> Result<String, ParseError> {
    match raw {
        None | Some(Json::Null) => Ok(uuid::Uuid::new_v4().to_string()),
        Some(Json::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Json::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(ParseError::invalid(field, "expected non-empty string")),
    }
}

fn parse_pair(raw: &Json) -> Result<Pair, ParseError> {
    match raw.as_array().map(Vec::as_slice) {
        Some([attr, value]) => {
            let attr = attr
                .as_str()
                .ok_or_else(|| ParseError::invalid("[0]", "attribute must be a string"))?;
            let attribute = Term::new(attr).map_err(|e| e.at("[0]"))?;
            let value = Value::from_json(value).map_err(|e| e.at("[1]"))?;
            Ok(Pair { attribute, value })
        }
        _ => Err(ParseError::invalid("$", "pair must be [attribute, value]")),
    }
}

fn parse_predicate(raw: &Json) -> Result<Predicate, ParseError> {
    match raw.as_array().map(Vec::as_slice) {
        Some([attr, op, value]) => {
            let attr = attr
                .as_str()
                .ok_or_else(|| ParseError::invalid("[0]", "attribute must be a string"))?;
            let attribute = Term::new(attr).map_err(|e| e.at("[0]"))?;
            let op: Op = op
                .as_str()
                .ok_or_else(|| ParseError::invalid("[1]", "operator must be a string"))?
                .parse()
                .map_err(|e: ParseError| e.at("[1]"))?;
            let value = Value::from_json(value).map_err(|e| e.at("[2]"))?;
            Predicate::new(attribute, op, value)
        }
        _ => Err(ParseError::invalid("$", "predicate must be [attribute, op, value]")),
    }
}

pub fn parse_event(document: &str) -> Result<Event, ParseError> {
    Event::from_json(&serde_json::from_str(document)?)
}

pub fn parse_subscription(document: &str) -> Result<Subscription, ParseError> {
    Subscription::from_json(&serde_json::from_str(document)?)
}

macro_rules! json_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                self.to_json().serialize(serializer)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let json = Json::deserialize(deserializer)?;
                <$ty>::from_json(&json).map_err(serde::de::Error::custom)
            }
        }
    };
}

json_serde!(Event);
json_serde!(Subscription);

/// Brute-force syntactic matching: every predicate must be satisfied by
/// at least one pair. Predicates are checked independently, so two
/// predicates on the same attribute may be satisfied by different pairs.
pub fn match_syntactic(s: &Subscription, e: &Event, current_year: i32) -> bool {
    s.predicates
        .iter()
        .all(|p| e.pairs.iter().any(|pair| evaluate_predicate(p, pair, current_year)))
}

/// One semantic step that contributed to a derived pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "lowercase")]
pub enum StageRecord {
    Synonym { from: Term, to: Term },
    Hierarchy { from: Term, to: Term, hops: u32 },
    Mapping { function: String },
}

impl fmt::Display for StageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageRecord::Synonym { from, to } => write!(f, "synonym: {from} -> {to}"),
            StageRecord::Hierarchy { from, to, hops } => {
                write!(f, "hierarchy: {from} -> {to} ({hops} hop{})", if *hops == 1 { "" } else { "s" })
            }
            StageRecord::Mapping { function } => write!(f, "mapping: {function}"),
        }
    }
}

/// An event matched a subscription.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub event_id: String,
    pub sub_id: String,
    pub subscriber: String,
    #[serde(default)]
    pub publisher: String,
    pub trace: Vec<StageRecord>,
    pub delivered_via: String,
    /// `event_id/sub_id`; lets at-least-once receivers drop repeats.
    pub dedupe_key: String,
}

impl Notification {
    pub fn dedupe_key(event_id: &str, sub_id: &str) -> String {
        format!("{event_id}/{sub_id}")
    }
}
