//! Seeded random streams. Every component draws from its own ChaCha stream
//! derived from the single run seed, so data, initialization and latent
//! draws can be reproduced independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Latent = 3,
    /// Discriminator initialization, kept apart from the generator's.
    DiscInit = 4,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
