use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{IdentityError, IdentityProfile, IdentityProvider};

/// TTL cache in front of another provider. Both "found" and "not found"
/// answers are cached; errors never are. A zero TTL disables caching.
#[derive(Debug)]
pub struct CachedProvider<P> {
    inner: P,
    ttl: Duration,
    entries: Mutex<HashMap<String, (Instant, Option<IdentityProfile>)>>,
}

impl<P: IdentityProvider> CachedProvider<P> {
    pub fn new(inner: P, ttl: Duration) -> Self {
        CachedProvider {
            inner,
            ttl,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn invalidate(&self, username: &str) {
        self.entries().remove(username);
    }

    pub fn clear(&self) {
        self.entries().clear();
    }

    fn entries(
        &self,
    ) -> std::sync::MutexGuard<'_, HashMap<String, (Instant, Option<IdentityProfile>)>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl<P: IdentityProvider> IdentityProvider for CachedProvider<P> {
    fn lookup(&self, username: &str) -> Result<Option<IdentityProfile>, IdentityError> {
        if self.ttl.is_zero() {
            return self.inner.lookup(username);
        }
        if let Some((at, cached)) = self.entries().get(username) {
            if at.elapsed() < self.ttl {
                return Ok(cached.clone());
            }
        }
        // not holding the lock across the (possibly slow) inner lookup
        let fresh = self.inner.lookup(username)?;
        self.entries()
            .insert(username.to_owned(), (Instant::now(), fresh.clone()));
        Ok(fresh)
    }
}
