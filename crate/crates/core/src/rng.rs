//! Named, counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the experiment seed. The
//! stream label is hashed (FNV-1a, platform independent) into the ChaCha
//! stream id, so `(seed, label)` pairs are reproducible everywhere and
//! distinct labels never share keystream.
//!
//! Per-item draws use [`item_stream`], which also folds the item id into the
//! stream id and positions the counter at `slot << 36` words. Draws for an
//! item therefore depend only on its id and the slot (round, iteration),
//! never on the order in which items are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, label)`.
pub fn seeded_rng(seed: u64, stream: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream.as_bytes()));
    rng
}

/// Generator addressed by `(seed, label, item id, slot)`.
pub fn item_stream(seed: u64, stream: &str, item_id: u64, slot: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream.as_bytes()) ^ splitmix64(item_id));
    rng.set_word_pos(u128::from(slot) << 36);
    rng
}

/// Derive a child seed, e.g. one per replication.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label.as_bytes()) ^ index))
}
