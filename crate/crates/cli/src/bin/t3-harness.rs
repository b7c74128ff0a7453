use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use t3_core::harness::bench::{self, BenchConfig};
use t3_core::harness::trace::plant_anomaly;
use t3_core::harness::{coverage_report, linkage, uniformity, Distribution, GenConfig, GeneratedChain, UtxoOracle};
use t3_core::oram::Strategy;

/// Synthetic chains, oracles, trace analysis and benchmarks. Tables go to
/// stdout as CSV.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic chain directory with keys.txt and truth.csv.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        blocks: u32,
        #[arg(long, default_value_t = 11)]
        txs_per_block: u32,
        /// Address histogram, e.g. `1:0.7,2:0.22,3+:0.08`.
        #[arg(long)]
        dist: Option<String>,
        #[arg(long, default_value_t = 3000)]
        live: u32,
        #[arg(long, default_value_t = 2000)]
        spent: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a chain directory and print the unspent set.
    Oracle {
        #[arg(long)]
        chain: PathBuf,
        /// Compare against a truth.csv instead of printing.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Uniformity and linkage report for a leaf log (CSV: `leaf` or `interval,leaf`).
    Trace {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        leaves: u32,
        /// Plant one cell at this multiple of its expected count first.
        #[arg(long)]
        plant: Option<f64>,
    },
    /// Latency and reader-scaling tables.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u32 << 16, 1 << 20])]
        sizes: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![Strategy::PathOram, Strategy::CircuitOram])]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 1000)]
        ops: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3, 4])]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        payload: usize,
    },
}

#[derive(Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
struct TruthRow {
    pkh: String,
    txid: String,
    vout: u32,
    amount: u64,
    height: u32,
}

#[derive(Deserialize)]
struct LeafRow {
    #[serde(default)]
    interval: u64,
    leaf: u32,
}

fn replay(dir: &std::path::Path) -> anyhow::Result<UtxoOracle> {
    let mut o = UtxoOracle::new();
    loop {
        let h = o.blocks;
        let hex_path = dir.join(format!("{h}.hex"));
        let bin_path = dir.join(format!("{h}.bin"));
        let raw = if hex_path.exists() {
            hex::decode(std::fs::read_to_string(&hex_path)?.trim()).with_context(|| format!("{}", hex_path.display()))?
        } else if bin_path.exists() {
            std::fs::read(&bin_path)?
        } else {
            return Ok(o);
        };
        o.apply_raw(&raw).with_context(|| format!("block {h}"))?;
    }
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let stdout = std::io::stdout();
    match Cli::parse().cmd {
        Cmd::Gen { seed, blocks, txs_per_block, dist, live, spent, out } => {
            let distribution = match dist {
                Some(d) => Distribution::parse(&d)?,
                None => Distribution::default(),
            };
            let cfg = GenConfig { seed, blocks, txs_per_block, distribution, live_outputs: live, spent_outputs: spent, ..Default::default() };
            let chain = GeneratedChain::generate(&cfg)?;
            std::fs::create_dir_all(&out)?;
            chain.write_dir(&out)?;
            log::info!(
                "{} blocks, {} outputs, {} spends, {} live in {}",
                chain.blocks.len(),
                chain.outputs_created,
                chain.spends,
                chain.live_utxos(),
                out.display()
            );
            let mut w = csv::Writer::from_writer(stdout.lock());
            for k in 1..=3 {
                w.serialize(coverage_report(&chain, k))?;
            }
            w.flush()?;
        }
        Cmd::Oracle { chain, check } => {
            let o = replay(&chain)?;
            let mut rows: Vec<TruthRow> = o
                .by_pkh()
                .into_values()
                .flatten()
                .map(|r| TruthRow { pkh: hex::encode(r.pkh), txid: r.txid_display(), vout: r.vout, amount: r.amount, height: r.height })
                .collect();
            rows.sort();
            match check {
                None => {
                    let mut w = csv::Writer::from_writer(stdout.lock());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
                Some(path) => {
                    let mut expected: Vec<TruthRow> = csv::Reader::from_path(&path)?.deserialize().collect::<Result<_, _>>()?;
                    expected.sort();
                    if expected != rows {
                        eprintln!("mismatch: replay has {} rows, {} has {}", rows.len(), path.display(), expected.len());
                        return Ok(ExitCode::FAILURE);
                    }
                    println!("ok: {} unspent outputs over {} blocks", rows.len(), o.blocks);
                }
            }
        }
        Cmd::Trace { input, leaves, plant } => {
            let rows: Vec<LeafRow> = csv::Reader::from_path(&input)?.deserialize().collect::<Result<_, _>>()?;
            if let Some(r) = rows.iter().find(|r| r.leaf >= leaves) {
                bail!("leaf {} out of range for {leaves} leaves", r.leaf);
            }
            let mut log: Vec<u32> = rows.iter().map(|r| r.leaf).collect();
            if let Some(f) = plant {
                log = plant_anomaly(&log, leaves, f);
            }
            let u = uniformity(&log, leaves);
            let pairs: Vec<(u64, u32)> = rows.iter().map(|r| (r.interval, r.leaf)).collect();
            let l = linkage(&pairs, leaves);
            let mut out = stdout.lock();
            writeln!(out, "samples,bins,chi2,chi2_p,max_load,max_load_p,p_value,collisions,expected_collisions,linkage_p")?;
            writeln!(
                out,
                "{},{},{:.3},{:.3e},{},{:.3e},{:.3e},{},{:.3},{:.3e}",
                u.samples, u.bins, u.chi2, u.chi2_p, u.max_load, u.max_load_p, u.p_value, l.collisions, l.expected, l.p_value
            )?;
        }
        Cmd::Bench { sizes, strategies, ops, warmup, threads, payload } => {
            let cfg = BenchConfig { sizes, strategies, payload_bytes: payload, ops, warmup, threads, seed: 1 };
            let (lat, scale) = bench::run(&cfg, |m| log::info!("{m}"))?;
            let mut w = csv::Writer::from_writer(stdout.lock());
            for r in &lat {
                w.serialize(r)?;
            }
            w.flush()?;
            drop(w);
            println!();
            let mut w = csv::Writer::from_writer(stdout.lock());
            for r in &scale {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
