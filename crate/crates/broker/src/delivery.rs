//! Webhook delivery: at-least-once with capped retries.

use std::sync::atomic::Ordering;
use std::time::{SystemTime, UNIX_EPOCH};

use sempubsub_core::Notification;

use crate::engine::Broker;
use crate::store::DeadLetter;

pub(crate) fn spawn_webhook(broker: Broker, url: String, n: Notification) {
    let Ok(handle) = tokio::runtime::Handle::try_current() else {
        log::error!("no async runtime to deliver {} to {url}", n.dedupe_key);
        broker.dead_letter(letter(n, url, 0, "no async runtime".into()));
        return;
    };
    broker.inner().pending_webhooks.fetch_add(1, Ordering::SeqCst);
    handle.spawn(async move {
        deliver(&broker, url, n).await;
        broker.inner().pending_webhooks.fetch_sub(1, Ordering::SeqCst);
    });
}

async fn deliver(broker: &Broker, url: String, n: Notification) {
    let policy = broker.config().webhook;
    let mut delay = policy.base_delay;
    let mut last_error = String::new();
    for attempt in 1..=policy.attempts {
        let sent = broker.inner().http.post(&url).json(&n).timeout(policy.timeout).send().await;
        match sent {
            Ok(resp) if resp.status().is_success() => return,
            Ok(resp) => last_error = format!("HTTP {}", resp.status()),
            Err(e) => last_error = e.to_string(),
        }
        log::debug!("webhook {url} attempt {attempt} for {}: {last_error}", n.dedupe_key);
        if attempt < policy.attempts {
            tokio::time::sleep(delay).await;
            delay *= 2;
        }
    }
    log::warn!("dead-lettering {} after {} attempts: {last_error}", n.dedupe_key, policy.attempts);
    broker.dead_letter(letter(n, url, policy.attempts, last_error));
}

fn letter(notification: Notification, target: String, attempts: u32, error: String) -> DeadLetter {
    let failed_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    DeadLetter { notification, target, attempts, error, failed_at }
}
