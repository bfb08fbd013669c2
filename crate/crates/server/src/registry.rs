use std::collections::HashMap;
use std::hash::Hash;
use std::time::{Duration, Instant};

/// Clients silent this long are dropped.
pub const HEARTBEAT_TIMEOUT: Duration = Duration::from_secs(5);
/// Consecutive failed sends before a client is dropped.
pub const MAX_SEND_FAILURES: u32 = 3;

#[derive(Clone, Copy, Debug)]
struct Entry {
    last_seen: Instant,
    failures: u32,
}

/// Subscribed clients keyed by endpoint.
#[derive(Debug)]
pub struct ClientRegistry<K> {
    clients: HashMap<K, Entry>,
    timeout: Duration,
}

impl<K: Copy + Eq + Hash> Default for ClientRegistry<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Copy + Eq + Hash> ClientRegistry<K> {
    pub fn new() -> Self {
        Self::with_timeout(HEARTBEAT_TIMEOUT)
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            clients: HashMap::new(),
            timeout,
        }
    }

    /// Adds or refreshes a client. Returns true when it is new.
    pub fn subscribe(&mut self, client: K, now: Instant) -> bool {
        match self.clients.get_mut(&client) {
            Some(e) => {
                e.last_seen = now;
                false
            }
            None => {
                self.clients.insert(
                    client,
                    Entry {
                        last_seen: now,
                        failures: 0,
                    },
                );
                true
            }
        }
    }

    /// Refreshes a known client. Unknown clients are not added.
    pub fn heartbeat(&mut self, client: K, now: Instant) -> bool {
        match self.clients.get_mut(&client) {
            Some(e) => {
                e.last_seen = now;
                true
            }
            None => false,
        }
    }

    pub fn unsubscribe(&mut self, client: K) -> bool {
        self.clients.remove(&client).is_some()
    }

    pub fn contains(&self, client: K) -> bool {
        self.clients.contains_key(&client)
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn clients(&self) -> Vec<K> {
        self.clients.keys().copied().collect()
    }

    /// Drops clients not heard from within the timeout.
    pub fn evict_stale(&mut self, now: Instant) -> Vec<K> {
        let timeout = self.timeout;
        let stale: Vec<K> = self
            .clients
            .iter()
            .filter(|(_, e)| now.saturating_duration_since(e.last_seen) > timeout)
            .map(|(k, _)| *k)
            .collect();
        for k in &stale {
            self.clients.remove(k);
        }
        stale
    }

    /// Records a send outcome. Returns true when the client was dropped.
    pub fn record_send(&mut self, client: K, ok: bool) -> bool {
        let Some(e) = self.clients.get_mut(&client) else {
            return false;
        };
        if ok {
            e.failures = 0;
            return false;
        }
        e.failures += 1;
        if e.failures >= MAX_SEND_FAILURES {
            self.clients.remove(&client);
            return true;
        }
        false
    }
}
