//! The presentation token a merchant or ATM receives instead of a card
//! number, and its QR text form.
//!
//! Binary layout (all integers big-endian):
//!
//! | offset | size     | field                                   |
//! |--------|----------|-----------------------------------------|
//! | 0      | 4        | magic `VC01`                            |
//! | 4      | 1        | network id                              |
//! | 5      | 16       | token id                                |
//! | 21     | 8        | expiry, Unix seconds                    |
//! | 29     | 2        | sealed reference length `L`             |
//! | 31     | `L`      | sealed card reference (nonce‖body‖tag)  |
//! | 31+L   | 32       | HMAC-SHA256 over bytes `0..31+L`        |
//!
//! NFC presentation carries exactly these bytes.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::RngCore;
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::crypto::envelope::{seal_with_nonce, NONCE_LEN};
use crate::crypto::{derive_key, hmac_sha256, open_card, SealError, SealKey, SealedCard};
use crate::entropy::random_array;

pub const MAGIC: &[u8; 4] = b"VC01";
pub const HEADER_LEN: usize = 31;
pub const MAC_LEN: usize = 32;
/// Keeps a whole token under 400 bytes so it fits a mid-size QR symbol.
pub const MAX_TOKEN_LEN: usize = 400;
pub const MAX_SEALED_LEN: usize = MAX_TOKEN_LEN - HEADER_LEN - MAC_LEN;
pub const QR_PREFIX: &str = "cardless://v1/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("malformed token: {0}")]
    Format(&'static str),
    #[error("token failed authentication")]
    Authenticity,
    #[error("token expired")]
    Expired,
    #[error("token expiry is not in the future")]
    ExpiryInPast,
    #[error("card reference too large for a token")]
    TooLarge,
}

pub type TokenId = [u8; 16];

/// A card network's identity and master key. Sealing and MAC keys are
/// derived from the master separately.
#[derive(Clone)]
pub struct NetworkKey {
    network_id: u8,
    seal: SealKey,
    mac: [u8; 32],
}

impl NetworkKey {
    pub fn new(network_id: u8, master: [u8; 32]) -> Self {
        Self {
            network_id,
            seal: SealKey::new(derive_key(&master, "cardless/token/seal")),
            mac: derive_key(&master, "cardless/token/mac"),
        }
    }

    pub fn network_id(&self) -> u8 {
        self.network_id
    }
}

impl std::fmt::Debug for NetworkKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NetworkKey").field("network_id", &self.network_id).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardToken {
    pub network_id: u8,
    pub token_id: TokenId,
    pub expiry: u64,
    pub sealed: SealedCard,
    pub mac: [u8; MAC_LEN],
}

impl CardToken {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sealed = self.sealed.to_bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + sealed.len() + MAC_LEN);
        out.extend_from_slice(MAGIC);
        out.push(self.network_id);
        out.extend_from_slice(&self.token_id);
        out.extend_from_slice(&self.expiry.to_be_bytes());
        out.extend_from_slice(&(sealed.len() as u16).to_be_bytes());
        out.extend_from_slice(&sealed);
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn token_id_hex(&self) -> String {
        hex::encode(self.token_id)
    }

    /// Recovers the card reference sealed inside the token.
    pub fn open_reference(&self, key: &NetworkKey) -> Result<Vec<u8>, SealError> {
        open_card(&self.sealed, &key.seal)
    }
}

pub fn encode_token(
    card_ref: &[u8],
    key: &NetworkKey,
    expiry: u64,
    now: u64,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<Vec<u8>, TokenError> {
    let token_id: TokenId = random_array(rng);
    let nonce: [u8; NONCE_LEN] = random_array(rng);
    encode_token_with(card_ref, key, expiry, now, token_id, nonce)
}

/// [`encode_token`] with caller-chosen token id and nonce.
pub fn encode_token_with(
    card_ref: &[u8],
    key: &NetworkKey,
    expiry: u64,
    now: u64,
    token_id: TokenId,
    nonce: [u8; NONCE_LEN],
) -> Result<Vec<u8>, TokenError> {
    if expiry <= now {
        return Err(TokenError::ExpiryInPast);
    }
    let sealed = seal_with_nonce(card_ref, &key.seal, nonce);
    if sealed.encoded_len() > MAX_SEALED_LEN {
        return Err(TokenError::TooLarge);
    }
    let mut token = CardToken { network_id: key.network_id, token_id, expiry, sealed, mac: [0; MAC_LEN] };
    let mut bytes = token.to_bytes();
    let body_len = bytes.len() - MAC_LEN;
    token.mac = hmac_sha256(&key.mac, &bytes[..body_len]);
    bytes[body_len..].copy_from_slice(&token.mac);
    Ok(bytes)
}

/// Parses and verifies a token. Checks run in a fixed order: structure,
/// then MAC, then expiry.
pub fn decode_token(bytes: &[u8], key: &NetworkKey, now: u64) -> Result<CardToken, TokenError> {
    if bytes.len() < HEADER_LEN + MAC_LEN || &bytes[..4] != MAGIC {
        return Err(TokenError::Format("bad magic or truncated header"));
    }
    let ct_len = u16::from_be_bytes([bytes[29], bytes[30]]) as usize;
    if ct_len > MAX_SEALED_LEN || bytes.len() != HEADER_LEN + ct_len + MAC_LEN {
        return Err(TokenError::Format("length field disagrees with token size"));
    }
    let body_len = HEADER_LEN + ct_len;
    let expected = hmac_sha256(&key.mac, &bytes[..body_len]);
    if !bool::from(expected.ct_eq(&bytes[body_len..])) {
        return Err(TokenError::Authenticity);
    }
    let sealed = SealedCard::from_bytes(&bytes[HEADER_LEN..body_len])
        .map_err(|_| TokenError::Format("sealed reference too short"))?;
    let token = CardToken {
        network_id: bytes[4],
        token_id: bytes[5..21].try_into().expect("16 bytes"),
        expiry: u64::from_be_bytes(bytes[21..29].try_into().expect("8 bytes")),
        sealed,
        mac: expected,
    };
    if token.expiry <= now {
        return Err(TokenError::Expired);
    }
    Ok(token)
}

pub fn qr_payload(token: &[u8]) -> String {
    format!("{QR_PREFIX}{}", URL_SAFE_NO_PAD.encode(token))
}

pub fn qr_parse(text: &str) -> Result<Vec<u8>, TokenError> {
    let body = text.strip_prefix(QR_PREFIX).ok_or(TokenError::Format("missing cardless://v1/ prefix"))?;
    if body.is_empty() {
        return Err(TokenError::Format("empty QR payload"));
    }
    URL_SAFE_NO_PAD.decode(body).map_err(|_| TokenError::Format("illegal character in QR payload"))
}
