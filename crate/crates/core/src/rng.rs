//! Counter-based random streams: path `p` of a run seeded with `seed` draws
//! from ChaCha8 stream `p`, independent of how paths are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
