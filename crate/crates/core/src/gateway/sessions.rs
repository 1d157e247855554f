use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::RngCore;
use thiserror::Error;

use crate::clock::Clock;
use crate::entropy::random_array;

pub const IDLE_EXPIRY_SECS: u64 = 30 * 60;
pub const REQUEST_CAP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthzError {
    #[error("unknown or expired session token")]
    Unauthorized,
    #[error("request cap reached for this session token")]
    RateLimited,
}

struct Entry {
    account_id: String,
    last_seen: u64,
    requests: u64,
}

/// Opaque bearer tokens: 32 random bytes, hex encoded, expiring after 30
/// idle minutes and capped at a fixed number of requests.
pub struct BearerSessions {
    entries: Mutex<HashMap<String, Entry>>,
    clock: Arc<dyn Clock>,
    idle_secs: u64,
    cap: u64,
}

impl BearerSessions {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_limits(clock, IDLE_EXPIRY_SECS, REQUEST_CAP)
    }

    pub fn with_limits(clock: Arc<dyn Clock>, idle_secs: u64, cap: u64) -> Self {
        Self { entries: Mutex::new(HashMap::new()), clock, idle_secs, cap }
    }

    pub fn open(&self, account_id: &str, rng: &mut (impl RngCore + ?Sized)) -> String {
        let token = hex::encode(random_array::<32>(rng));
        let entry = Entry { account_id: account_id.to_owned(), last_seen: self.clock.now(), requests: 0 };
        self.lock().insert(token.clone(), entry);
        token
    }

    pub fn authorize(&self, token: &str) -> Result<String, AuthzError> {
        let now = self.clock.now();
        let mut entries = self.lock();
        let entry = entries.get_mut(token).ok_or(AuthzError::Unauthorized)?;
        if now.saturating_sub(entry.last_seen) >= self.idle_secs {
            entries.remove(token);
            return Err(AuthzError::Unauthorized);
        }
        if entry.requests >= self.cap {
            return Err(AuthzError::RateLimited);
        }
        entry.requests += 1;
        entry.last_seen = now;
        Ok(entry.account_id.clone())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Entry>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn expiry_forgery_and_cap() {
        let clock = Arc::new(ManualClock::new(0));
        let s = BearerSessions::with_limits(clock.clone(), 1_800, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let t = s.open("acct-0001", &mut rng);
        assert_eq!(t.len(), 64);
        assert_eq!(s.authorize(&t).unwrap(), "acct-0001");
        assert_eq!(s.authorize(&"0".repeat(64)), Err(AuthzError::Unauthorized));
        clock.advance(1_799);
        assert!(s.authorize(&t).is_ok());
        assert!(s.authorize(&t).is_ok());
        assert_eq!(s.authorize(&t), Err(AuthzError::RateLimited));

        let t2 = s.open("acct-0002", &mut rng);
        clock.advance(1_800);
        assert_eq!(s.authorize(&t2), Err(AuthzError::Unauthorized));
    }
}
