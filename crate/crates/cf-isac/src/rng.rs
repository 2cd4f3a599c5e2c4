//! Counter-based RNG substreams.
//!
//! Every random draw in the simulator comes from a [`ChaCha8Rng`] derived
//! from `(master seed, label path)`. Trials, sweep points, and hypotheses
//! get disjoint label paths, so the stream a trial sees is a pure function
//! of the seed and its indices — independent of worker count and execution
//! order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha stream for `(seed, ids…)`.
pub fn substream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0xA0761D6478BD642F;
    splitmix64(&mut state);
    for &id in ids {
        state ^= id.wrapping_mul(0xE7037ED1A0B428DB);
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream labels used by the experiment engine. Keeping them in one place
/// guarantees two purposes never collide on the same substream.
pub mod stream {
    pub const SCENARIO: u64 = 1;
    pub const CHANNELS: u64 = 2;
    pub const SYMBOLS: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const RCS: u64 = 5;
    pub const CALIBRATION: u64 = 6;
}
