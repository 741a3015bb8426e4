//! Independent random streams, one per purpose, all derived from the
//! scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream called `label`. FNV-1a over the label, folded with the
/// base seed.
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix(seed ^ mix(h))
}

pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, label))
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    pub topology: ChaCha8Rng,
    pub heterogeneity: ChaCha8Rng,
    pub workload: ChaCha8Rng,
    pub network: ChaCha8Rng,
    pub failures: ChaCha8Rng,
    pub obstacle: ChaCha8Rng,
    /// Agent power-on offsets.
    pub agents: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            topology: stream(seed, "topology"),
            heterogeneity: stream(seed, "heterogeneity"),
            workload: stream(seed, "workload"),
            network: stream(seed, "network"),
            failures: stream(seed, "failures"),
            obstacle: stream(seed, "obstacle"),
            agents: stream(seed, "agents"),
        }
    }
}
