use std::collections::{BTreeMap, HashSet};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;
use tokio::sync::watch;

use crate::protocol::{ApprovalDecision, ApprovalQuery, ApprovalSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("no pending approval with that id")]
    NotFound,
    #[error("approval already resolved")]
    AlreadyResolved,
    #[error("PIN rejected")]
    WrongPin,
    #[error("decision must be approve or decline")]
    InvalidDecision,
}

struct Pending {
    query: ApprovalQuery,
    reply: SyncSender<ApprovalDecision>,
}

#[derive(Default)]
struct Inner {
    pending: BTreeMap<String, Pending>,
    closed: HashSet<String>,
}

/// Pending cardholder approvals. Adjudication threads block in
/// [`ApprovalSource::request`]; HTTP handlers list and resolve entries.
pub struct ApprovalInbox {
    inner: Mutex<Inner>,
    version: watch::Sender<u64>,
}

impl Default for ApprovalInbox {
    fn default() -> Self {
        Self::new()
    }
}

impl ApprovalInbox {
    pub fn new() -> Self {
        Self { inner: Mutex::new(Inner::default()), version: watch::channel(0).0 }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn bump(&self) {
        self.version.send_modify(|v| *v += 1);
    }

    /// Changes whenever an approval is added or removed.
    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.version.subscribe()
    }

    pub fn pending_for(&self, account_id: &str) -> Vec<ApprovalQuery> {
        self.lock().pending.values().filter(|p| p.query.account_id == account_id).map(|p| p.query.clone()).collect()
    }

    /// Delivers the cardholder's answer. Succeeds at most once per session.
    pub fn resolve(
        &self,
        account_id: &str,
        session_id: &str,
        decision: ApprovalDecision,
        pin_ok: bool,
    ) -> Result<(), ResolveError> {
        if decision == ApprovalDecision::Timeout {
            return Err(ResolveError::InvalidDecision);
        }
        let mut inner = self.lock();
        let Some(p) = inner.pending.get(session_id) else {
            return Err(if inner.closed.contains(session_id) { ResolveError::AlreadyResolved } else { ResolveError::NotFound });
        };
        if p.query.account_id != account_id {
            return Err(ResolveError::NotFound);
        }
        if !pin_ok {
            return Err(ResolveError::WrongPin);
        }
        let p = inner.pending.remove(session_id).expect("present");
        inner.closed.insert(session_id.to_owned());
        // Buffered, so this never blocks even if the waiter just timed out.
        let _ = p.reply.try_send(decision);
        drop(inner);
        self.bump();
        Ok(())
    }
}

impl ApprovalSource for ApprovalInbox {
    fn request(&self, query: &ApprovalQuery, timeout: Duration) -> ApprovalDecision {
        let (reply, answer) = sync_channel(1);
        self.lock().pending.insert(query.session_id.clone(), Pending { query: query.clone(), reply });
        self.bump();
        if let Ok(d) = answer.recv_timeout(timeout) {
            return d;
        }
        let mut inner = self.lock();
        if inner.pending.remove(&query.session_id).is_none() {
            // Resolved between the timeout and taking the lock.
            return answer.try_recv().unwrap_or(ApprovalDecision::Timeout);
        }
        inner.closed.insert(query.session_id.clone());
        drop(inner);
        self.bump();
        ApprovalDecision::Timeout
    }
}
