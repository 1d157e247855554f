//! The bank's outward face: credentials, the event log, bearer sessions,
//! the approval inbox and the HTTP API.

pub mod auth;
pub mod event_log;
pub mod http;
pub mod inbox;
pub mod serve;
pub mod sessions;
