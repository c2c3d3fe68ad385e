//! Counter-based random substreams.
//!
//! Every random draw in training is keyed by the run seed, a fixed label and
//! a tuple of counters (epoch, batch, pair, ...), so results do not depend on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes `(seed, label, coords)` into a single 64-bit key.
pub fn substream_key(seed: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ fnv1a(label.bytes()));
    for &c in coords {
        h = splitmix(h ^ c);
    }
    h
}

pub fn substream(seed: u64, label: &str, coords: &[u64]) -> ChaCha8Rng {
    let key = substream_key(seed, label, coords);
    let mut bytes = [0u8; 32];
    let mut h = key;
    for chunk in bytes.chunks_mut(8) {
        h = splitmix(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
