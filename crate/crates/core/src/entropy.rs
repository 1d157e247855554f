use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub type BoxRng = Box<dyn RngCore + Send>;

/// Where randomness comes from: the operating system in production, a
/// seeded ChaCha20 stream when runs must be reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EntropyMode {
    #[default]
    Os,
    Seeded(u64),
}

impl EntropyMode {
    pub fn from_seed(seed: Option<u64>) -> Self {
        seed.map_or(Self::Os, Self::Seeded)
    }

    pub fn rng(self) -> BoxRng {
        match self {
            Self::Os => Box::new(OsRng),
            Self::Seeded(seed) => Box::new(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_deterministic(self) -> bool {
        matches!(self, Self::Seeded(_))
    }
}

pub fn random_array<const N: usize>(rng: &mut (impl RngCore + ?Sized)) -> [u8; N] {
    let mut out = [0u8; N];
    rng.fill_bytes(&mut out);
    out
}
