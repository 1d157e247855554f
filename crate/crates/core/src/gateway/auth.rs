//! Credential storage and verification.
//!
//! Passwords and PINs are stored only as salted PBKDF2-HMAC-SHA256 digests and
//! compared in constant time. Unknown usernames go through the same hashing
//! work as known ones and produce the same rejection.

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::entropy::random_array;

pub const DEFAULT_ITERATIONS: u32 = 100_000;
pub const PIN_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("PIN must be exactly six digits")]
    PinFormat,
    #[error("username and password must be non-empty")]
    Empty,
    #[error("iteration count must be positive")]
    Iterations,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

impl Credentials {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        Self { username: username.into(), password: password.into() }
    }
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials").field("username", &self.username).finish_non_exhaustive()
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRecord {
    pub username: String,
    #[serde(with = "hex::serde")]
    pub salt: [u8; 16],
    pub iterations: u32,
    #[serde(with = "hex::serde")]
    pub password_digest: [u8; 32],
    #[serde(with = "hex::serde")]
    pub pin_digest: [u8; 32],
}

impl std::fmt::Debug for CredentialRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CredentialRecord")
            .field("username", &self.username)
            .field("iterations", &self.iterations)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verification {
    Verified,
    Rejected,
}

fn digest(secret: &str, salt: &[u8; 16], domain: &[u8], iterations: u32) -> [u8; 32] {
    let mut salted = Vec::with_capacity(salt.len() + domain.len());
    salted.extend_from_slice(salt);
    salted.extend_from_slice(domain);
    let mut out = [0u8; 32];
    pbkdf2_hmac::<Sha256>(secret.as_bytes(), &salted, iterations, &mut out);
    out
}

pub fn valid_pin(pin: &str) -> bool {
    pin.len() == PIN_LEN && pin.bytes().all(|b| b.is_ascii_digit())
}

impl CredentialRecord {
    pub fn create(
        username: &str,
        password: &str,
        pin: &str,
        iterations: u32,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Result<Self, CredentialError> {
        if username.is_empty() || password.is_empty() {
            return Err(CredentialError::Empty);
        }
        if !valid_pin(pin) {
            return Err(CredentialError::PinFormat);
        }
        if iterations == 0 {
            return Err(CredentialError::Iterations);
        }
        let salt: [u8; 16] = random_array(rng);
        Ok(Self {
            username: username.to_owned(),
            salt,
            iterations,
            password_digest: digest(password, &salt, b"password", iterations),
            pin_digest: digest(pin, &salt, b"pin", iterations),
        })
    }

    pub fn verify_pin(&self, pin: &str) -> Verification {
        let computed = digest(pin, &self.salt, b"pin", self.iterations);
        if bool::from(computed.ct_eq(&self.pin_digest)) && valid_pin(pin) {
            Verification::Verified
        } else {
            Verification::Rejected
        }
    }
}

/// Compares what the user typed against the stored record, if any.
pub fn verify_user(input: &Credentials, stored: Option<&CredentialRecord>) -> Verification {
    match stored {
        Some(record) => {
            let computed = digest(&input.password, &record.salt, b"password", record.iterations);
            let name_ok = record.username.as_bytes().ct_eq(input.username.as_bytes());
            if bool::from(computed.ct_eq(&record.password_digest) & name_ok) {
                Verification::Verified
            } else {
                Verification::Rejected
            }
        }
        None => {
            // Spend the same hashing effort so timing does not reveal the miss.
            let _ = digest(&input.password, &[0u8; 16], b"password", DEFAULT_ITERATIONS.min(10_000));
            Verification::Rejected
        }
    }
}
