use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Counterparty;

/// The question put to the cardholder before a payment settles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalQuery {
    pub session_id: String,
    pub account_id: String,
    pub counterparty: Counterparty,
    pub amount: u64,
    pub requested_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApprovalDecision {
    Approve,
    Decline,
    Timeout,
}

/// Blocks until the cardholder answers or `timeout` elapses.
pub trait ApprovalSource: Send + Sync {
    fn request(&self, query: &ApprovalQuery, timeout: Duration) -> ApprovalDecision;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysApprove;

impl ApprovalSource for AlwaysApprove {
    fn request(&self, _query: &ApprovalQuery, _timeout: Duration) -> ApprovalDecision {
        ApprovalDecision::Approve
    }
}

/// Answers every query the same way without waiting.
#[derive(Debug, Clone, Copy)]
pub struct FixedDecision(pub ApprovalDecision);

impl ApprovalSource for FixedDecision {
    fn request(&self, _query: &ApprovalQuery, _timeout: Duration) -> ApprovalDecision {
        self.0
    }
}

impl<F> ApprovalSource for F
where
    F: Fn(&ApprovalQuery) -> ApprovalDecision + Send + Sync,
{
    fn request(&self, query: &ApprovalQuery, _timeout: Duration) -> ApprovalDecision {
        self(query)
    }
}
