//! Key material and primitives: an additively homomorphic scheme for
//! encrypted spend accumulators and an authenticated envelope for card
//! payloads.

pub mod envelope;
pub mod paillier;

use hmac::{Hmac, Mac};
use sha2::Sha256;

pub use envelope::{open_card, seal_card, SealError, SealKey, SealedCard};
pub use paillier::{Ciphertext, HeError, HeKeyPair, PublicKey, SecretKey};

pub type HmacSha256 = Hmac<Sha256>;

pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// Derives an independent 32-byte subkey for `label` from a master key.
pub fn derive_key(master: &[u8; 32], label: &str) -> [u8; 32] {
    hmac_sha256(master, label.as_bytes())
}
