//! Named, seed-derived random streams. All randomness in the crate flows
//! through here; nothing is seeded from the clock.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream names used by the pipelines.
pub mod streams {
    pub const SPLIT: &str = "split";
    pub const INIT: &str = "init";
    pub const SAMPLING: &str = "sampling";
    pub const CROPS: &str = "crops";
    pub const SYNTH: &str = "synth";
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Independent generator for `(seed, name)`.
pub fn substream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}
