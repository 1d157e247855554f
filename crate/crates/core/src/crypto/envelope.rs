//! Authenticated symmetric sealing (ChaCha20-Poly1305) for card payloads.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::entropy::random_array;

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SealError {
    #[error("sealed payload failed authentication")]
    Authentication,
    #[error("malformed sealed payload: {0}")]
    Format(&'static str),
}

/// 32-byte symmetric key. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct SealKey([u8; 32]);

impl SealKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, SealError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| SealError::Format("key must be 32 bytes"))?;
        Ok(Self(arr))
    }

    pub fn random(rng: &mut (impl RngCore + ?Sized)) -> Self {
        Self(random_array(rng))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SealKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SealKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedCard {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

pub fn seal_card(payload: &[u8], key: &SealKey, rng: &mut (impl RngCore + ?Sized)) -> SealedCard {
    let nonce: [u8; NONCE_LEN] = random_array(rng);
    seal_with_nonce(payload, key, nonce)
}

pub fn seal_with_nonce(payload: &[u8], key: &SealKey, nonce: [u8; NONCE_LEN]) -> SealedCard {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
    let mut body = payload.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), b"", &mut body)
        .expect("payload within ChaCha20-Poly1305 length limit");
    SealedCard { nonce, body, tag: tag.into() }
}

pub fn open_card(sealed: &SealedCard, key: &SealKey) -> Result<Vec<u8>, SealError> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
    let mut body = sealed.body.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&sealed.nonce),
            b"",
            &mut body,
            Tag::from_slice(&sealed.tag),
        )
        .map_err(|_| SealError::Authentication)?;
    Ok(body)
}

impl SealedCard {
    /// `nonce (12) ‖ body ‖ tag (16)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SealError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(SealError::Format("shorter than nonce and tag"));
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Self {
            nonce: nonce.try_into().expect("split at nonce length"),
            body: body.to_vec(),
            tag: tag.try_into().expect("split at tag length"),
        })
    }

    pub fn encoded_len(&self) -> usize {
        NONCE_LEN + self.body.len() + TAG_LEN
    }
}

impl Serialize for SealedCard {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use base64::Engine;
        s.serialize_str(&base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for SealedCard {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use base64::Engine;
        let s = String::deserialize(d)?;
        let bytes = base64::engine::general_purpose::URL_SAFE_NO_PAD
            .decode(s)
            .map_err(serde::de::Error::custom)?;
        SealedCard::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}
