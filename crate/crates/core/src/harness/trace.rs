//! Access-pattern analysis: are observed path leaves uniform, and do reads
//! within an interval link to each other?

use statrs::distribution::{Binomial, ChiSquared, DiscreteCDF, Poisson, ContinuousCDF};

/// Smallest expected count per analysis cell.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityReport {
    pub samples: usize,
    pub leaf_count: u32,
    /// Analysis cells: consecutive leaf ranges of equal width.
    pub bins: u32,
    pub chi2: f64,
    pub chi2_p: f64,
    pub max_load: u64,
    /// Bonferroni-corrected tail probability of the fullest cell.
    pub max_load_p: f64,
    /// Both tests combined (Bonferroni over the two).
    pub p_value: f64,
}

impl UniformityReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Number of cells for `samples` reads over `leaf_count` leaves: a power of
/// two dividing the leaves, with at least `MIN_EXPECTED` reads per cell.
pub fn bins_for(samples: usize, leaf_count: u32) -> u32 {
    let cap = ((samples as f64 / MIN_EXPECTED).floor() as u64).clamp(1, leaf_count.max(1) as u64);
    let mut b = 1u64;
    while b * 2 <= cap && (leaf_count as u64).is_multiple_of(b * 2) {
        b *= 2;
    }
    b as u32
}

pub fn bin_counts(leaves: &[u32], leaf_count: u32, bins: u32) -> Vec<u64> {
    let mut counts = vec![0u64; bins as usize];
    for &l in leaves {
        counts[(l as u64 * bins as u64 / leaf_count as u64) as usize] += 1;
    }
    counts
}

/// Chi-square and max-load tests of `leaves` against the uniform distribution.
pub fn uniformity(leaves: &[u32], leaf_count: u32) -> UniformityReport {
    assert!(leaf_count > 0, "leaf_count must be positive");
    assert!(leaves.iter().all(|&l| l < leaf_count), "leaf out of range");
    let n = leaves.len();
    let bins = bins_for(n, leaf_count);
    if n == 0 || bins < 2 {
        return UniformityReport {
            samples: n,
            leaf_count,
            bins,
            chi2: 0.0,
            chi2_p: 1.0,
            max_load: n as u64,
            max_load_p: 1.0,
            p_value: 1.0,
        };
    }
    let counts = bin_counts(leaves, leaf_count, bins);
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let chi2_p = ChiSquared::new((bins - 1) as f64).unwrap().sf(chi2);
    let max_load = *counts.iter().max().unwrap();
    let tail = if max_load == 0 {
        1.0
    } else {
        Binomial::new(1.0 / bins as f64, n as u64).unwrap().sf(max_load - 1)
    };
    let max_load_p = (tail * bins as f64).min(1.0);
    UniformityReport {
        samples: n,
        leaf_count,
        bins,
        chi2,
        chi2_p,
        max_load,
        max_load_p,
        p_value: (2.0 * chi2_p.min(max_load_p)).min(1.0),
    }
}

/// Adds reads to one analysis cell until it holds `factor` times its
/// expected count.
pub fn plant_anomaly(leaves: &[u32], leaf_count: u32, factor: f64) -> Vec<u32> {
    let bins = bins_for(leaves.len(), leaf_count);
    let width = leaf_count / bins;
    let target_cell = bins / 2;
    let expected = leaves.len() as f64 / bins as f64;
    let mut out = leaves.to_vec();
    let have = bin_counts(leaves, leaf_count, bins)[target_cell as usize];
    let extra = ((factor * expected).ceil() as u64).saturating_sub(have);
    for i in 0..extra {
        out.push(target_cell * width + (i as u32 % width));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkageReport {
    pub reads: usize,
    /// Pairs of reads within one interval that hit the same leaf.
    pub collisions: u64,
    pub expected: f64,
    /// P(at least this many collisions) under independent uniform leaves.
    pub p_value: f64,
}

/// Counts same-leaf pairs within each interval. Read-once paths for distinct
/// blocks are independent, so collisions should match chance; duplicate reads
/// of one block inside an interval repeat a leaf every time.
pub fn linkage(reads: &[(u64, u32)], leaf_count: u32) -> LinkageReport {
    use std::collections::HashMap;
    let mut per: HashMap<(u64, u32), u64> = HashMap::new();
    let mut sizes: HashMap<u64, u64> = HashMap::new();
    for &(interval, leaf) in reads {
        *per.entry((interval, leaf)).or_default() += 1;
        *sizes.entry(interval).or_default() += 1;
    }
    let collisions = per.values().map(|&c| c * (c - 1) / 2).sum();
    let expected: f64 = sizes.values().map(|&n| (n * n.saturating_sub(1)) as f64 / 2.0 / leaf_count as f64).sum();
    let p_value = if collisions == 0 {
        1.0
    } else if expected <= 0.0 {
        0.0
    } else {
        Poisson::new(expected).unwrap().sf(collisions - 1)
    };
    LinkageReport { reads: reads.len(), collisions, expected, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn uniform(n: usize, leaves: u32, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0..leaves)).collect()
    }

    #[test]
    fn binning() {
        assert_eq!(bins_for(10_000, 1 << 14), 1024);
        assert_eq!(bins_for(10_000, 64), 64);
        assert_eq!(bins_for(3, 64), 1);
        assert_eq!(bins_for(1000, 48), 16);
    }

    #[test]
    fn uniform_passes_anomaly_fails() {
        let log = uniform(10_000, 1 << 14, 7);
        let r = uniformity(&log, 1 << 14);
        assert!(r.p_value > 0.01, "{r:?}");
        let bad = uniformity(&plant_anomaly(&log, 1 << 14, 10.0), 1 << 14);
        assert!(bad.p_value < 1e-6, "{bad:?}");
    }

    #[test]
    fn skewed_log_fails() {
        let log: Vec<u32> = uniform(5000, 1024, 3).into_iter().map(|l| l / 2).collect();
        assert!(uniformity(&log, 1024).p_value < 1e-6);
    }

    #[test]
    fn linkage_detects_repeats() {
        let log = uniform(200, 1 << 16, 9);
        let clean: Vec<(u64, u32)> = log.iter().map(|&l| (1, l)).collect();
        assert!(linkage(&clean, 1 << 16).p_value > 0.01);
        let mut dup = clean.clone();
        dup.extend(log[..10].iter().map(|&l| (1, l)));
        let r = linkage(&dup, 1 << 16);
        assert!(r.collisions >= 10);
        assert!(r.p_value < 1e-6);
        // The same leaves in different intervals do not link.
        let spread: Vec<(u64, u32)> = log[..10].iter().enumerate().map(|(i, &l)| (i as u64, l)).chain(clean).collect();
        assert!(linkage(&spread, 1 << 16).p_value > 1e-3);
    }
}
