//! Named random substreams of one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `name`, derived from `seed`; the same pair always
/// yields the same stream regardless of what other streams were drawn.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the name picks the ChaCha stream id
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}
