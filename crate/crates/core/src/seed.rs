//! Counter-based seed derivation.
//!
//! Every random stream in a campaign is addressed by a path of counters
//! (`drop_id`, `user_id`, purpose tag) hashed together with the master seed,
//! so results do not depend on the order in which work units are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Purpose tags for the independent streams of one user in one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Geometry = 1,
    Clusters = 2,
    Pilots = 3,
    PilotNoise = 4,
    MonteCarlo = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a path of counters into the master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_from(master: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, path))
}
