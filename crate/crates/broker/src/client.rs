use serde::{Deserialize, Serialize};

use crate::error::BrokerError;

/// How notifications reach a client.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", try_from = "RawTransport")]
pub enum Transport {
    /// Held until the client polls `GET /notifications`.
    Queue,
    /// POSTed to the URL, retried, dead-lettered on permanent failure.
    Webhook { url: String },
    /// Pushed on the client's live feed; queued while no feed is open.
    Stream,
}

impl Transport {
    pub fn name(&self) -> &'static str {
        match self {
            Transport::Queue => "queue",
            Transport::Webhook { .. } => "webhook",
            Transport::Stream => "stream",
        }
    }

    pub fn webhook(url: &str) -> Result<Transport, BrokerError> {
        let parsed = url::Url::parse(url).map_err(|e| BrokerError::InvalidRequest(format!("webhook url: {e}")))?;
        // No TLS client is built in; terminate TLS in front of the receiver.
        if parsed.scheme() != "http" || parsed.host_str().is_none() {
            return Err(BrokerError::InvalidRequest(format!("webhook url must be http:// with a host: {url}")));
        }
        Ok(Transport::Webhook { url: parsed.to_string() })
    }
}

// Accepts "queue", "stream", {"type":"queue"} and {"type":"webhook","url":...}.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawTransport {
    Name(String),
    Tagged {
        #[serde(rename = "type")]
        kind: String,
        url: Option<String>,
    },
}

impl TryFrom<RawTransport> for Transport {
    type Error = BrokerError;

    fn try_from(raw: RawTransport) -> Result<Transport, BrokerError> {
        let (kind, url) = match raw {
            RawTransport::Name(kind) => (kind, None),
            RawTransport::Tagged { kind, url } => (kind, url),
        };
        match (kind.to_ascii_lowercase().as_str(), url) {
            ("queue", None) => Ok(Transport::Queue),
            ("stream", None) => Ok(Transport::Stream),
            ("webhook", Some(url)) => Transport::webhook(&url),
            ("webhook", None) => Err(BrokerError::InvalidRequest("webhook transport needs a url".into())),
            ("queue" | "stream", Some(_)) => Err(BrokerError::InvalidRequest(format!("{kind} transport takes no url"))),
            (other, _) => Err(BrokerError::InvalidRequest(format!("unknown transport {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: String,
    pub name: String,
    pub transport: Transport,
}
