//! Deterministic per-purpose random streams derived from one root seed.
//!
//! Every (root seed, drop index, purpose) triple maps to an independent
//! ChaCha stream, so adding or reordering consumers never perturbs the draws
//! of another purpose.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    DirectChannel = 2,
    BsRisChannel = 3,
    RisUeChannel = 4,
    Initialization = 5,
    Test = 99,
}

pub fn stream(root_seed: u64, drop: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&root_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&drop.to_le_bytes());
    seed[16..24].copy_from_slice(b"hris-rng");
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(purpose as u64);
    rng
}
