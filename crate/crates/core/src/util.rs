//! Seed derivation and the serial/parallel execution switch.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Derives an independent seed from a master seed, a purpose tag, and an
/// index. SplitMix64 finalization over the three inputs: serial and parallel
/// runs draw from identical per-task streams, so worker count never changes
/// results.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = master ^ 0x9e37_79b9_7f4a_7c15;
    for &b in tag.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded RNG used everywhere results must reproduce.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How to run a batch of independent jobs (episodes, CMA candidates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workers {
    /// One job at a time on the calling thread.
    Serial,
    /// rayon's global pool (falls back to serial without the `parallel`
    /// feature).
    Parallel,
}

impl Workers {
    /// Maps a CLI-style worker count: 1 means serial, anything else parallel.
    pub fn from_count(n: usize) -> Self {
        if n == 1 {
            Workers::Serial
        } else {
            Workers::Parallel
        }
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::Parallel
    }
}

/// Runs `f(0..n)` and collects results in index order. Outputs are reduced
/// in index order by callers, so both paths are bit-deterministic.
pub fn run_indexed<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match workers {
        Workers::Serial => (0..n).map(f).collect(),
        Workers::Parallel => run_parallel(n, f),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
