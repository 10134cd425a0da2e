//! Execution strategy and seeded substreams.
//!
//! Every random quantity in the crate is drawn from a substream keyed by
//! `(seed, domain, index)`, where `index` is a unit, replicate or oracle draw.
//! Work items never share a generator, so the output of a parallel run is
//! identical to the output of a sequential one regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How data-parallel loops are executed.
///
/// `Parallel` uses rayon when the `parallel` feature is enabled and silently
/// degrades to sequential execution otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work items concurrently.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Substream domains. Distinct domains keep e.g. the bootstrap from reusing
/// the sampling stream of the unit it resamples.
pub(crate) mod domain {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const ORACLE: u64 = 0x4f52_4143;
    pub const REPLICATION: u64 = 0x5245_504c;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const AUDIT: u64 = 0x4155_4454;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. the seed of replication `index` of a run.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(domain)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Counter-based generator for work item `index` within `domain`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain)));
    rng.set_stream(index);
    rng
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_range(exec, 0, n, f)
}

/// Maps `f` over `start..end`, preserving index order in the output.
pub fn map_range<T, F>(exec: Execution, start: usize, end: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (start..end).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (start..end).map(f).collect()
}
