//! Root-seed splitting.
//!
//! Every randomized artifact in this crate flows from a single `u64` root
//! seed. The splitting rule is fixed so that runs are reproducible no matter
//! how work is scheduled across threads:
//!
//! * a *stream* of a seed is a ChaCha12 generator keyed by the seed with the
//!   ChaCha stream index set to the stream number;
//! * a *child seed* is derived by mixing a label into the root seed with
//!   SplitMix64, and is itself splittable.
//!
//! Simulators use streams 0 (latent draws) and 1 (count draws) of their seed;
//! chain `c` of a fit uses `child_seed(seed, c)`; posterior-predictive
//! replicate `r` uses `child_seed(seed, r)`. The rule is recorded in run
//! manifests so downstream consumers can regenerate any output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream index for latent-field draws inside a simulator.
pub const STREAM_LATENT: u64 = 0;
/// Stream index for count draws inside a simulator.
pub const STREAM_COUNT: u64 = 1;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive an independent child seed for `label` (SplitMix64 finalizer).
pub fn child_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
