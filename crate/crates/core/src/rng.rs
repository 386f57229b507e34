//! Seeded random streams.
//!
//! All sampling in this crate is driven by [`ChaCha8Rng`]. A run is fully
//! described by one `u64` seed; independent work items (bootstrap
//! repetitions, time bins, concentrations) draw from disjoint ChaCha streams
//! selected by index, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream for work item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Packs a small tag and two indices into a stream index, so that different
/// pipelines sharing one seed never collide.
pub fn stream_id(tag: u16, major: u32, minor: u64) -> u64 {
    debug_assert!(minor < 1 << 24, "minor index overflows its field");
    ((tag as u64) << 48) | ((major as u64 & 0xFF_FFFF) << 24) | (minor & 0xFF_FFFF)
}
