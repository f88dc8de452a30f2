//! Event dispatcher for semantic publish/subscribe.
//!
//! [`Broker`] holds clients, subscriptions and outgoing notifications and can
//! be driven directly; [`http::router`] puts the JSON API in front of it.

mod client;
mod config;
mod delivery;
mod engine;
mod error;
pub mod http;
mod store;

pub use client::{ClientRecord, Transport};
pub use config::{BrokerConfig, Mode, WebhookPolicy};
pub use engine::{Broker, PublishReceipt, Status};
pub use error::BrokerError;
pub use store::{DeadLetter, LOG_FILE};
