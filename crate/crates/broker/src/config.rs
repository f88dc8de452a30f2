use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use sempubsub_core::PrecisionConfig;

/// Matching mode for publications. Syntactic mode disables every stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Semantic,
    Syntactic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Semantic => "semantic",
            Mode::Syntactic => "syntactic",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semantic" => Ok(Mode::Semantic),
            "syntactic" => Ok(Mode::Syntactic),
            other => Err(format!("unknown mode {other:?}, expected semantic or syntactic")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WebhookPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl Default for WebhookPolicy {
    fn default() -> Self {
        WebhookPolicy { attempts: 3, base_delay: Duration::from_millis(200), timeout: Duration::from_secs(5) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrokerConfig {
    pub mode: Mode,
    /// Precision for subscriptions that do not carry their own.
    pub default_precision: PrecisionConfig,
    /// Year that `CURRENT_YEAR` and open-ended ranges resolve to.
    pub current_year: i32,
    /// Append-only log directory; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub admin_token: Option<String>,
    pub webhook: WebhookPolicy,
}

impl BrokerConfig {
    pub fn new(current_year: i32) -> Self {
        BrokerConfig {
            mode: Mode::Semantic,
            default_precision: PrecisionConfig::semantic(),
            current_year,
            data_dir: None,
            admin_token: None,
            webhook: WebhookPolicy::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_data_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.data_dir = Some(dir.into());
        self
    }

    pub fn with_default_precision(mut self, precision: PrecisionConfig) -> Self {
        self.default_precision = precision;
        self
    }

    pub fn with_admin_token(mut self, token: impl Into<String>) -> Self {
        self.admin_token = Some(token.into());
        self
    }

    pub fn with_webhook_policy(mut self, policy: WebhookPolicy) -> Self {
        self.webhook = policy;
        self
    }
}
