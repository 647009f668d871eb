//! Deterministic, splittable random streams for the Monte-Carlo harness.
//!
//! Every random quantity in an experiment is drawn from a stream keyed by
//! `(master_seed, replicate, purpose)`. Streams never share state, so
//! replicates can run on any number of workers in any order and still produce
//! bit-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a, so purpose tags hash identically across builds.
fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the stream for one `(master_seed, replicate, purpose)` triple.
pub fn stream(master_seed: u64, replicate: u64, purpose: &str) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(purpose).rotate_left(17) ^ replicate.wrapping_mul(0x2545_f491_4f6c_dd1d);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
