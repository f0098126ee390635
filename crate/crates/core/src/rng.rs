//! Deterministic random streams.
//!
//! Every sampling entry point takes an explicit stream derived from
//! `(master seed, stream index)`. Streams are ChaCha8 instances sharing one
//! key expanded from the master seed, distinguished by the cipher's 64-bit
//! stream counter, so any worker can reproduce any path independently of
//! scheduling. Results are therefore identical for every worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Paths per point-stream slot; see [`substream`].
pub const PATHS_PER_POINT: u64 = 1 << 32;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Expand a 64-bit master seed into a ChaCha key.
pub fn master_key(master_seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// The random stream for `(master seed, stream index)`.
pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(master_key(master_seed));
    rng.set_stream(stream);
    rng
}

/// Pack a point slot and a path index into one stream index. Point slots and
/// path indices must each stay below 2^32.
#[inline]
pub fn substream(point: u64, path: u64) -> u64 {
    debug_assert!(point < PATHS_PER_POINT && path < PATHS_PER_POINT);
    (point << 32) | path
}
