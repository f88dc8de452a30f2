//! Job-finder demo content: ontology and the recruiter/candidate fixtures.

use crate::model::{parse_event, parse_subscription, Event, Subscription};
use crate::ontology::Ontology;

pub const JOBFINDER_ONTOLOGY: &str = include_str!("../data/jobfinder.json");

/// Year that `CURRENT_YEAR` and `present` resolve to in the fixtures.
pub const DEMO_YEAR: i32 = 2003;

/// Recruiter: Toronto graduate, PhD, at least 4 years of experience.
pub const RECRUITER_SUBSCRIPTION: &str = r#"{"sub_id":"recruiter-s","predicates":[["university","=","Toronto"],["degree","=","PhD"],["professional experience",">=",4]]}"#;

/// Candidate resume that only matches through synonyms and a mapping.
pub const CANDIDATE_EVENT: &str = r#"{"event_id":"candidate-e","pairs":[["school","Toronto"],["degree","PhD"],["work experience",true],["graduation year",1990]]}"#;

pub const EXPERIENCE_SUBSCRIPTION: &str = r#"{"sub_id":"experience-s","predicates":[["university","=","Toronto"],["professional experience",">=",4]]}"#;

/// Resume with two jobs; graduated ten years before the demo year.
pub const TWO_JOBS_EVENT: &str = r#"{"event_id":"two-jobs-e","pairs":[["school","Toronto"],["graduation year",1993],["job1","IBM"],["period","1994-1997"],["job2","Microsoft"],["period","1999-present"]]}"#;

pub fn jobfinder_ontology() -> Ontology {
    Ontology::from_json_str(JOBFINDER_ONTOLOGY).expect("bundled ontology is valid")
}

pub fn recruiter_subscription() -> Subscription {
    parse_subscription(RECRUITER_SUBSCRIPTION).expect("fixture parses")
}

pub fn candidate_event() -> Event {
    parse_event(CANDIDATE_EVENT).expect("fixture parses")
}

pub fn experience_subscription() -> Subscription {
    parse_subscription(EXPERIENCE_SUBSCRIPTION).expect("fixture parses")
}

pub fn two_jobs_event() -> Event {
    parse_event(TWO_JOBS_EVENT).expect("fixture parses")
}
