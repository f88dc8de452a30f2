//! Semantic content-based publish/subscribe matching.
//!
//! Events and subscriptions are flat attribute-value structures
//! ([`model`]). Before matching, events are expanded through synonym
//! rewriting, concept-hierarchy generalization and mapping functions
//! ([`pipeline`]) using the knowledge in an [`ontology::Ontology`]. The
//! expanded pairs are then matched against a counting predicate index
//! ([`matcher`]).

pub mod demo;
pub mod error;
pub mod matcher;
pub mod model;
pub mod ontology;
pub mod pipeline;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use error::{OntologyError, ParseError};
pub use matcher::{oracle_match, MatcherError, PredicateIndex, SubMatch};
pub use model::{
    evaluate_predicate, match_syntactic, parse_event, parse_subscription, Event, Notification, Op, Pair, Predicate,
    RangeEnd, StageRecord, Subscription, Term, Value, YearRange,
};
pub use ontology::{load_ontology, Ontology, OntologyBuilder, OntologyDocument};
pub use pipeline::{
    admissible, expand_event, normalize_subscription, Derivation, DerivedPair, ExpandedEvent, PrecisionConfig, Stage,
    StageSet,
};
