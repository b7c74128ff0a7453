//! Synthetic chains, reference oracles, trace analysis and benchmarks.

pub mod bench;
pub mod gen;
pub mod oracle;
pub mod trace;

pub use gen::{Distribution, GenConfig, GeneratedChain};
pub use oracle::{KvOracle, UtxoOracle};
pub use trace::{linkage, uniformity, LinkageReport, UniformityReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Throws `m` balls into `n` bins uniformly and returns the fullest bin.
pub fn max_load(m: u64, n: u32, seed: u64) -> u32 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bins = vec![0u32; n as usize];
    for _ in 0..m {
        bins[rng.gen_range(0..n) as usize] += 1;
    }
    bins.into_iter().max().unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CoverageReport {
    pub addresses: usize,
    pub utxos: usize,
    pub max_out: usize,
    pub covered: usize,
    pub coverage: f64,
}

pub fn coverage_report(chain: &GeneratedChain, max_out: usize) -> CoverageReport {
    let utxos = chain.live_utxos();
    let covered = chain.truth.values().map(|s| s.len().min(max_out)).sum();
    CoverageReport {
        addresses: chain.truth.len(),
        utxos,
        max_out,
        covered,
        coverage: chain.coverage(max_out),
    }
}
