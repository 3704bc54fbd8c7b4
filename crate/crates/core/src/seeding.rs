//! Splittable seeding: every Monte-Carlo cell gets its own ChaCha stream,
//! derived from a root seed and a cell key, so results do not depend on the
//! order in which cells are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key path into a single 64-bit stream id.
pub fn derive(root: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix(root), |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// RNG for the cell identified by `key` under `root`.
pub fn rng_for(root: u64, key: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(derive(root, key));
    rng
}

/// RNG from a single explicit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
