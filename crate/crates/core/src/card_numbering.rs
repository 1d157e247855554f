//! Virtual card numbers: Luhn check digits, the fixed 16-digit layout
//! (6-digit IIN, 9-digit account identifier, 1 check digit) and the
//! registry that keeps issued numbers unique.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IIN_LEN: usize = 6;
pub const ACCOUNT_ID_LEN: usize = 9;
pub const PAN_LEN: usize = IIN_LEN + ACCOUNT_ID_LEN + 1;

/// Default number of account identifiers tried before issuance gives up.
pub const DEFAULT_MAX_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumberingError {
    #[error("expected only decimal digits, found {0:?} at position {1}")]
    NonDigit(char, usize),
    #[error("length {len} outside {min}..={max}")]
    Length { len: usize, min: usize, max: usize },
    #[error("check digit does not match")]
    CheckDigit,
    #[error("number is already registered or was retired")]
    Duplicate,
    #[error("number is not active")]
    NotActive,
    #[error("no unique number found after {0} attempts")]
    Exhausted(usize),
}

fn check_digits(s: &str, min: usize, max: usize) -> Result<(), NumberingError> {
    if let Some((i, c)) = s.chars().enumerate().find(|(_, c)| !c.is_ascii_digit()) {
        return Err(NumberingError::NonDigit(c, i));
    }
    let len = s.len();
    if len < min || len > max {
        return Err(NumberingError::Length { len, min, max });
    }
    Ok(())
}

fn doubling_sum(body: &[u8]) -> u32 {
    body.iter()
        .rev()
        .enumerate()
        .map(|(i, b)| {
            let d = u32::from(b - b'0');
            if i % 2 == 0 {
                let dd = d * 2;
                if dd > 9 {
                    dd - 9
                } else {
                    dd
                }
            } else {
                d
            }
        })
        .sum()
}

/// Computes the Luhn check digit for a body of 7 to 18 digits.
pub fn luhn_check_digit(body: &str) -> Result<u8, NumberingError> {
    check_digits(body, 7, 18)?;
    let sum = doubling_sum(body.as_bytes());
    // Reduce once more so a sum divisible by ten yields 0 rather than 10.
    Ok(((10 - sum % 10) % 10) as u8)
}

/// Validates a full card number of 8 to 19 digits.
pub fn luhn_validate(pan: &str) -> Result<bool, NumberingError> {
    check_digits(pan, 8, 19)?;
    let (body, last) = pan.split_at(pan.len() - 1);
    let expected = luhn_check_digit(body)?;
    Ok(last.as_bytes()[0] - b'0' == expected)
}

/// Draws a uniformly distributed, zero-padded 9-digit identifier.
pub fn generate_account_id<R: Rng + ?Sized>(rng: &mut R) -> String {
    format!("{:09}", rng.gen_range(0..1_000_000_000u32))
}

/// The three fields of a 16-digit card number.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PanParts {
    iin: String,
    account_id: String,
    check_digit: u8,
}

impl PanParts {
    pub fn iin(&self) -> &str {
        &self.iin
    }

    pub fn account_id(&self) -> &str {
        &self.account_id
    }

    pub fn check_digit(&self) -> u8 {
        self.check_digit
    }

    pub fn pan(&self) -> String {
        format!("{}{}{}", self.iin, self.account_id, self.check_digit)
    }

    /// First six and last four digits with the middle hidden.
    pub fn masked(&self) -> String {
        mask_pan(&self.pan())
    }

    pub fn parse(pan: &str) -> Result<Self, NumberingError> {
        check_digits(pan, PAN_LEN, PAN_LEN)?;
        let parts = assemble_pan(&pan[..IIN_LEN], &pan[IIN_LEN..PAN_LEN - 1])?;
        if parts.pan() != pan {
            return Err(NumberingError::CheckDigit);
        }
        Ok(parts)
    }
}

// Keep full numbers out of debug output and logs.
impl fmt::Debug for PanParts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PanParts").field(&self.masked()).finish()
    }
}

pub fn mask_pan(pan: &str) -> String {
    if pan.len() <= 10 {
        return "•".repeat(pan.len());
    }
    let hidden = pan.len() - 10;
    format!("{}{}{}", &pan[..6], "•".repeat(hidden), &pan[pan.len() - 4..])
}

/// Joins IIN and account identifier and appends the Luhn digit.
pub fn assemble_pan(iin: &str, account_id: &str) -> Result<PanParts, NumberingError> {
    check_digits(iin, IIN_LEN, IIN_LEN)?;
    check_digits(account_id, ACCOUNT_ID_LEN, ACCOUNT_ID_LEN)?;
    let body = format!("{iin}{account_id}");
    let check_digit = luhn_check_digit(&body)?;
    Ok(PanParts { iin: iin.to_owned(), account_id: account_id.to_owned(), check_digit })
}

/// Active and retired card numbers. Retired numbers are never reissued.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PanRegistry {
    active: BTreeSet<String>,
    retired: BTreeSet<String>,
}

impl PanRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_unique(&mut self, pan: &str) -> Result<(), NumberingError> {
        if self.active.contains(pan) || self.retired.contains(pan) {
            return Err(NumberingError::Duplicate);
        }
        self.active.insert(pan.to_owned());
        Ok(())
    }

    pub fn retire(&mut self, pan: &str) -> Result<(), NumberingError> {
        if !self.active.remove(pan) {
            return Err(NumberingError::NotActive);
        }
        self.retired.insert(pan.to_owned());
        Ok(())
    }

    pub fn is_active(&self, pan: &str) -> bool {
        self.active.contains(pan)
    }

    pub fn is_retired(&self, pan: &str) -> bool {
        self.retired.contains(pan)
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn retired_len(&self) -> usize {
        self.retired.len()
    }

    pub fn active(&self) -> impl Iterator<Item = &str> {
        self.active.iter().map(String::as_str)
    }

    pub fn retired(&self) -> impl Iterator<Item = &str> {
        self.retired.iter().map(String::as_str)
    }

    /// Generates account identifiers until one yields an unregistered number.
    pub fn issue<R: Rng + ?Sized>(
        &mut self,
        iin: &str,
        rng: &mut R,
        max_attempts: usize,
    ) -> Result<PanParts, NumberingError> {
        for _ in 0..max_attempts {
            let parts = assemble_pan(iin, &generate_account_id(rng))?;
            match self.register_unique(&parts.pan()) {
                Ok(()) => return Ok(parts),
                Err(NumberingError::Duplicate) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(NumberingError::Exhausted(max_attempts))
    }
}

/// A registry shared between threads. Each call holds the lock for the whole
/// check-and-update, so two callers can never both admit the same number.
#[derive(Debug, Default)]
pub struct SharedPanRegistry(Mutex<PanRegistry>);

impl SharedPanRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_unique(&self, pan: &str) -> Result<(), NumberingError> {
        self.lock().register_unique(pan)
    }

    pub fn retire(&self, pan: &str) -> Result<(), NumberingError> {
        self.lock().retire(pan)
    }

    pub fn snapshot(&self) -> PanRegistry {
        self.lock().clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, PanRegistry> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}
