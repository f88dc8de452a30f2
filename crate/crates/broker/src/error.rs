use thiserror::Error;

use sempubsub_core::ParseError;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("unknown client {0}")]
    UnknownClient(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(String),
    #[error("client {0} already registered")]
    DuplicateClient(String),
    #[error("subscription {0} already registered")]
    DuplicateSubscription(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    InvalidRequest(String),
    #[error("admin token missing or wrong")]
    Unauthorized,
    #[error("persistence: {0}")]
    Storage(#[from] std::io::Error),
}
