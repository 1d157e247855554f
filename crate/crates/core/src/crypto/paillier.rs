//! Additively homomorphic public-key encryption over a composite modulus
//! (Paillier with generator `n + 1`).
//!
//! Multiplying two ciphertexts modulo `n²` yields an encryption of the sum of
//! their plaintexts, and raising a ciphertext to a plain scalar `k` yields an
//! encryption of `k · m`. Plaintexts live in `[0, n)`; callers keep monetary
//! amounts as integer minor units well below that bound.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SUPPORTED_MODULUS_BITS: [usize; 4] = [256, 512, 1024, 2048];
pub const DEFAULT_MODULUS_BITS: usize = 2048;

const MILLER_RABIN_ROUNDS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeError {
    #[error("unsupported modulus size {0} (expected one of 256, 512, 1024, 2048)")]
    UnsupportedSize(usize),
    #[error("plaintext outside the key's message space")]
    OutOfRange,
    #[error("ciphertext was produced under a different key")]
    KeyMismatch,
    #[error("ciphertext is not an element of the ciphertext group")]
    InvalidCiphertext,
    #[error("malformed ciphertext encoding: {0}")]
    Encoding(&'static str),
}

pub type KeyFingerprint = [u8; 8];

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    fingerprint: KeyFingerprint,
    bits: usize,
}

#[derive(Clone)]
pub struct SecretKey {
    lambda: BigUint,
    mu: BigUint,
    public: PublicKey,
}

#[derive(Clone)]
pub struct HeKeyPair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
    pub modulus_bits: usize,
}

/// A ciphertext tagged with the fingerprint of the key that produced it.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    fingerprint: KeyFingerprint,
    value: BigUint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bits)
            .field("fingerprint", &hex::encode(self.fingerprint))
            .finish()
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey").field("public", &self.public).finish_non_exhaustive()
    }
}

impl fmt::Debug for HeKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeKeyPair").field("public_key", &self.public_key).finish_non_exhaustive()
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.value.to_str_radix(16);
        let head = &hex[..hex.len().min(16)];
        write!(f, "Ciphertext({}:{head}…)", hex::encode(self.fingerprint))
    }
}

fn fingerprint_of(n: &BigUint) -> KeyFingerprint {
    let digest = Sha256::digest(n.to_bytes_be());
    let mut fp = [0u8; 8];
    fp.copy_from_slice(&digest[..8]);
    fp
}

impl PublicKey {
    fn from_modulus(n: BigUint) -> Self {
        let bits = n.bits() as usize;
        Self { n_squared: &n * &n, fingerprint: fingerprint_of(&n), bits, n }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn encrypt(&self, m: &BigUint, rng: &mut (impl RngCore + ?Sized)) -> Result<Ciphertext, HeError> {
        if m >= &self.n {
            return Err(HeError::OutOfRange);
        }
        let r = loop {
            let r = random_below(&self.n, rng);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                break r;
            }
        };
        // (n + 1)^m = 1 + m·n  (mod n²)
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext { fingerprint: self.fingerprint, value: gm * rn % &self.n_squared })
    }

    pub fn encrypt_u64(&self, m: u64, rng: &mut (impl RngCore + ?Sized)) -> Result<Ciphertext, HeError> {
        self.encrypt(&BigUint::from(m), rng)
    }

    /// Homomorphic addition of the underlying plaintexts.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext { fingerprint: self.fingerprint, value: &a.value * &b.value % &self.n_squared })
    }

    /// Homomorphic multiplication of the plaintext by a known scalar.
    pub fn scale(&self, c: &Ciphertext, k: &BigUint) -> Result<Ciphertext, HeError> {
        self.check(c)?;
        if k >= &self.n {
            return Err(HeError::OutOfRange);
        }
        Ok(Ciphertext { fingerprint: self.fingerprint, value: c.value.modpow(k, &self.n_squared) })
    }

    fn check(&self, c: &Ciphertext) -> Result<(), HeError> {
        if c.fingerprint != self.fingerprint {
            return Err(HeError::KeyMismatch);
        }
        if c.value.is_zero() || c.value >= self.n_squared {
            return Err(HeError::InvalidCiphertext);
        }
        Ok(())
    }
}

impl SecretKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, HeError> {
        let pk = &self.public;
        pk.check(c)?;
        let u = c.value.modpow(&self.lambda, &pk.n_squared);
        let l = (u - BigUint::one()) / &pk.n;
        Ok(l * &self.mu % &pk.n)
    }

    /// Decrypts a value expected to fit in 64 bits.
    pub fn decrypt_u64(&self, c: &Ciphertext) -> Result<u64, HeError> {
        let m = self.decrypt(c)?;
        u64::try_from(&m).map_err(|_| HeError::OutOfRange)
    }
}

impl HeKeyPair {
    pub fn generate(modulus_bits: usize, rng: &mut (impl RngCore + ?Sized)) -> Result<Self, HeError> {
        if !SUPPORTED_MODULUS_BITS.contains(&modulus_bits) {
            return Err(HeError::UnsupportedSize(modulus_bits));
        }
        let half = modulus_bits / 2;
        loop {
            let p = random_prime(half, rng);
            let q = random_prime(half, rng);
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() as usize != modulus_bits {
                continue;
            }
            let p1 = &p - BigUint::one();
            let q1 = &q - BigUint::one();
            // Equal-length primes make gcd(n, φ(n)) = 1, which the simplified
            // generator relies on; check it anyway.
            if !n.gcd(&(&p1 * &q1)).is_one() {
                continue;
            }
            let lambda = p1.lcm(&q1);
            let Some(mu) = mod_inverse(&(&lambda % &n), &n) else {
                continue;
            };
            let public = PublicKey::from_modulus(n);
            return Ok(Self {
                public_key: public.clone(),
                secret_key: SecretKey { lambda, mu, public },
                modulus_bits,
            });
        }
    }
}

impl Ciphertext {
    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// `fingerprint (8) ‖ length (u32 BE) ‖ magnitude (BE)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mag = self.value.to_bytes_be();
        let mut out = Vec::with_capacity(12 + mag.len());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&(mag.len() as u32).to_be_bytes());
        out.extend_from_slice(&mag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HeError> {
        if bytes.len() < 12 {
            return Err(HeError::Encoding("shorter than header"));
        }
        let mut fingerprint = [0u8; 8];
        fingerprint.copy_from_slice(&bytes[..8]);
        let len = u32::from_be_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() != len {
            return Err(HeError::Encoding("length prefix does not match body"));
        }
        Ok(Self { fingerprint, value: BigUint::from_bytes_be(body) })
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Ciphertext::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

fn random_bits(bits: usize, rng: &mut (impl RngCore + ?Sized)) -> BigUint {
    let mut bytes = vec![0u8; bits.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    let excess = bytes.len() * 8 - bits;
    bytes[0] &= 0xff >> excess;
    BigUint::from_bytes_be(&bytes)
}

fn random_below(bound: &BigUint, rng: &mut (impl RngCore + ?Sized)) -> BigUint {
    let bits = bound.bits() as usize;
    loop {
        let r = random_bits(bits, rng);
        if &r < bound {
            return r;
        }
    }
}

const SMALL_PRIMES: [u32; 24] =
    [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97];

fn random_prime(bits: usize, rng: &mut (impl RngCore + ?Sized)) -> BigUint {
    loop {
        let mut candidate = random_bits(bits, rng);
        // Top two bits set so the product of two such primes has exactly 2·bits bits.
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(bits as u64 - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

pub(crate) fn is_probable_prime(n: &BigUint, rng: &mut (impl RngCore + ?Sized)) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for p in SMALL_PRIMES.iter().map(|&p| BigUint::from(p)).chain([two.clone()]) {
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n1 = n - BigUint::one();
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    let span = n - BigUint::from(3u32);
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = random_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let (a, m) = (BigInt::from(a.clone()), BigInt::from(m.clone()));
    let e = a.extended_gcd(&m);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m).to_biguint()
}
