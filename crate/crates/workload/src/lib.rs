//! Workload tooling for the semantic pub/sub broker: seeded generation of
//! subscription and publication streams, a live HTTP driver and a matcher
//! benchmark.

pub mod bench;
pub mod drive;
pub mod generate;
pub mod spec;

pub use drive::{drive, DriveOptions, RunReport};
pub use generate::{generate, write_workload, AliasStats, Streams, Workload};
pub use spec::DomainSpec;
