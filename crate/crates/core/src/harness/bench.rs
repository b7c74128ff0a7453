//! Latency and reader-scaling measurements. Only ratios are meaningful
//! across machines.

use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::oram::{Oram, OramError, OramParams, OramState, Strategy};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<u32>,
    pub strategies: Vec<Strategy>,
    pub payload_bytes: usize,
    pub ops: usize,
    pub warmup: usize,
    pub threads: Vec<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![1 << 16, 1 << 20],
            strategies: vec![Strategy::PathOram, Strategy::CircuitOram],
            payload_bytes: 32,
            ops: 1000,
            warmup: 100,
            threads: vec![1, 2, 3, 4],
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LatencyRow {
    pub n: u32,
    pub strategy: String,
    pub ops: usize,
    pub standard_median_us: f64,
    pub read_once_median_us: f64,
    /// read_once / standard.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub n: u32,
    pub strategy: String,
    pub threads: usize,
    pub ops: usize,
    pub elapsed_ms: f64,
    pub ops_per_sec: f64,
    /// Throughput relative to one thread.
    pub speedup: f64,
}

pub fn median(samples: &mut [Duration]) -> Duration {
    assert!(!samples.is_empty());
    samples.sort_unstable();
    let m = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[m]
    } else {
        (samples[m - 1] + samples[m]) / 2
    }
}

fn us(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// Builds a tree and writes `min(n, writes)` random blocks so paths hold
/// real data.
pub fn prepared_oram(n: u32, strategy: Strategy, payload_bytes: usize, writes: usize, seed: u64) -> Result<Oram, OramError> {
    let mut oram = Oram::init(OramParams::new(n, payload_bytes, strategy), &[7u8; 32], seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut buf = vec![0u8; payload_bytes];
    for _ in 0..writes.min(n as usize) {
        rng.fill(&mut buf[..]);
        oram.write(rng.gen_range(0..n), &buf)?;
    }
    Ok(oram)
}

/// Medians of standard accesses (with eviction) and read-once accesses on
/// the same state.
pub fn latency(oram: &mut Oram, ops: usize, warmup: usize, seed: u64) -> Result<LatencyRow, OramError> {
    let n = oram.params().capacity_n;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut standard = Vec::with_capacity(ops);
    for i in 0..warmup + ops {
        let bid = rng.gen_range(0..n);
        let t = Instant::now();
        std::hint::black_box(oram.read(bid)?);
        if i >= warmup {
            standard.push(t.elapsed());
        }
    }
    let state = oram.state();
    let mut once = Vec::with_capacity(ops);
    for i in 0..warmup + ops {
        let bid = rng.gen_range(0..n);
        let t = Instant::now();
        std::hint::black_box(state.read_once(bid, None)?);
        if i >= warmup {
            once.push(t.elapsed());
        }
    }
    let (s, o) = (us(median(&mut standard)), us(median(&mut once)));
    Ok(LatencyRow {
        n,
        strategy: oram.params().strategy.to_string(),
        ops,
        standard_median_us: s,
        read_once_median_us: o,
        ratio: o / s,
    })
}

/// Aggregate read_once throughput of `threads` readers sharing one
/// snapshot, each performing `ops_per_thread` reads after warmup.
pub fn throughput(state: &Arc<OramState>, threads: usize, ops_per_thread: usize, warmup: usize, seed: u64) -> Result<(Duration, usize), OramError> {
    let n = state.params().capacity_n;
    let start = Arc::new(Barrier::new(threads + 1));
    let done = Arc::new(Barrier::new(threads + 1));
    let handles: Vec<_> = (0..threads)
        .map(|t| {
            let (state, start, done) = (Arc::clone(state), Arc::clone(&start), Arc::clone(&done));
            std::thread::spawn(move || -> Result<(), OramError> {
                let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(t as u64));
                for _ in 0..warmup {
                    std::hint::black_box(state.read_once(rng.gen_range(0..n), None)?);
                }
                start.wait();
                let mut res = Ok(());
                for _ in 0..ops_per_thread {
                    if let Err(e) = state.read_once(rng.gen_range(0..n), None) {
                        res = Err(e);
                        break;
                    }
                }
                done.wait();
                res
            })
        })
        .collect();
    start.wait();
    let t = Instant::now();
    done.wait();
    let elapsed = t.elapsed();
    for h in handles {
        h.join().expect("reader thread panicked")?;
    }
    Ok((elapsed, threads * ops_per_thread))
}

pub fn scaling(state: &Arc<OramState>, cfg: &BenchConfig) -> Result<Vec<ScalingRow>, OramError> {
    let mut rows: Vec<ScalingRow> = Vec::new();
    let mut base = None;
    for &k in &cfg.threads {
        let (elapsed, ops) = throughput(state, k, cfg.ops, cfg.warmup, cfg.seed)?;
        let ops_per_sec = ops as f64 / elapsed.as_secs_f64();
        let b = *base.get_or_insert(ops_per_sec);
        rows.push(ScalingRow {
            n: state.params().capacity_n,
            strategy: state.params().strategy.to_string(),
            threads: k,
            ops,
            elapsed_ms: elapsed.as_secs_f64() * 1e3,
            ops_per_sec,
            speedup: ops_per_sec / b,
        });
    }
    Ok(rows)
}

/// Runs the latency grid, and reader scaling at the largest size for each
/// strategy. `progress` is called as rows complete.
pub fn run(cfg: &BenchConfig, mut progress: impl FnMut(&str)) -> Result<(Vec<LatencyRow>, Vec<ScalingRow>), OramError> {
    let mut lat = Vec::new();
    let mut scale = Vec::new();
    let largest = cfg.sizes.iter().copied().max().unwrap_or(0);
    for &n in &cfg.sizes {
        for &s in &cfg.strategies {
            let mut oram = prepared_oram(n, s, cfg.payload_bytes, 4 * (cfg.ops + cfg.warmup), cfg.seed)?;
            let row = latency(&mut oram, cfg.ops, cfg.warmup, cfg.seed)?;
            progress(&format!("latency n={} {}: ratio {:.3}", n, s, row.ratio));
            lat.push(row);
            if n == largest {
                let state = Arc::new(oram.snapshot());
                drop(oram);
                let rows = scaling(&state, cfg)?;
                if let Some(r) = rows.last() {
                    progress(&format!("scaling n={} {}: {} threads x{:.2}", n, s, r.threads, r.speedup));
                }
                scale.extend(rows);
            }
        }
    }
    Ok((lat, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        let ms = Duration::from_millis;
        assert_eq!(median(&mut [ms(3), ms(1), ms(2)]), ms(2));
        assert_eq!(median(&mut [ms(4), ms(1), ms(2), ms(3)]), Duration::from_micros(2500));
    }

    #[test]
    fn small_grid_runs() {
        let cfg = BenchConfig { sizes: vec![1 << 8], ops: 50, warmup: 5, threads: vec![1, 2], ..Default::default() };
        let (lat, scale) = run(&cfg, |_| {}).unwrap();
        assert_eq!(lat.len(), 2);
        assert_eq!(scale.len(), 4);
        assert!(lat.iter().all(|r| r.standard_median_us > 0.0 && r.read_once_median_us > 0.0));
        assert_eq!(scale[0].speedup, 1.0);
    }
}
