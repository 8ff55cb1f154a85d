//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 seeded with the user
//! seed through `seed_from_u64`. Independent consumers use distinct stream
//! ids so that, for example, layer 2's initialization does not depend on how
//! many numbers layer 1 consumed:
//!
//! - stream `ℓ` (1-based) initializes the weight/conductance matrix of layer `ℓ`,
//! - stream [`SHUFFLE_STREAM`] + `epoch` orders the training set for that epoch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SHUFFLE_STREAM: u64 = 1 << 32;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
