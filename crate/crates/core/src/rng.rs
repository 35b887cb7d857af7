//! Seed derivation.
//!
//! Every Monte-Carlo task derives its own stream from a base seed and a
//! task key, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Mixes a base seed with a sequence of integer keys.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for k in keys {
        h.update(k.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// Per-request seed from `(base, patient_id, t)`.
pub fn request_seed(base: u64, patient_id: &str, t: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((patient_id.len() as u64).to_le_bytes());
    h.update(patient_id.as_bytes());
    h.update(t.to_bits().to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

pub fn rng_for(base: u64, keys: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}
