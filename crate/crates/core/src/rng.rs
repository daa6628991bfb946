//! Seeded random streams. Every stochastic component draws from its own
//! stream derived from a root seed, so changing one noise source never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeaRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer; used to derive independent child seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(0xA24B_AED4_963E_E407)))
}

pub fn stream(seed: u64, stream_id: u64) -> SeaRng {
    seeded(derive(seed, stream_id))
}

/// Stream identifiers.
pub mod streams {
    pub const ACTUATION: u64 = 1;
    pub const POSE: u64 = 2;
    pub const PERCEPTION: u64 = 3;
    pub const POLICY: u64 = 4;
    pub const WORLD: u64 = 5;
    pub const EPISODE: u64 = 6;
    pub const PROTOTYPES: u64 = 7;
}
