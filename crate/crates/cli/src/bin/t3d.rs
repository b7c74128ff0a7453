use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use t3_core::chain::{BlockSource, DirBlockSource};
use t3_core::oram::Strategy;
use t3_core::service::{attest_root_from_env, Node, RunningServer, ServiceConfig};
use t3_core::store::{DeltaMode, DuplicatePolicy};

/// Oblivious UTXO server.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Allow,
    Strict,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the state directory by replaying a block directory.
    Init {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// TOML config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        z: Option<usize>,
        #[arg(long)]
        max_out: Option<usize>,
        #[arg(long)]
        delta_max: Option<u32>,
        /// Let clients pick how many of their blocks to read.
        #[arg(long)]
        client_delta: bool,
        #[arg(long, value_enum)]
        duplicates: Option<Policy>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve queries and follow the chain directory.
    Serve {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        readers: Option<usize>,
        /// Block directory to poll; defaults to the one used at init.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        poll_ms: Option<u64>,
    },
    /// Print the default config as TOML.
    Config,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Init { chain, state, config, n, strategy, z, max_out, delta_max, client_delta, duplicates, seed } => {
            let mut cfg = match config {
                Some(p) => ServiceConfig::load(&p)?,
                None => ServiceConfig::default(),
            };
            cfg.state_dir = state;
            cfg.chain_dir = Some(std::fs::canonicalize(&chain).with_context(|| format!("chain dir {}", chain.display()))?);
            cfg.n = n.unwrap_or(cfg.n);
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            cfg.bucket_z = z.or(cfg.bucket_z);
            cfg.store.max_out = max_out.unwrap_or(cfg.store.max_out);
            cfg.store.delta_max = delta_max.unwrap_or(cfg.store.delta_max);
            if client_delta {
                cfg.store.delta_mode = DeltaMode::ClientChosen;
            }
            match duplicates {
                Some(Policy::Allow) => cfg.store.duplicate_policy = DuplicatePolicy::Allow,
                Some(Policy::Strict) => cfg.store.duplicate_policy = DuplicatePolicy::Strict,
                None => {}
            }
            cfg.seed = seed.or(cfg.seed);
            let root = attest_root_from_env()?;
            let source = DirBlockSource::new(&chain);
            let (node, r) = Node::init(cfg, &source, &root, true)?;
            println!(
                "initialized {}: blocks={} creates={} spends={} missing={} block_full={} nulldata={} nonstandard={} unresolved={} interval={}",
                node.cfg.state_dir.display(),
                r.blocks,
                r.creates,
                r.spends,
                r.spends_missing,
                r.block_full,
                r.prune.nulldata,
                r.prune.nonstandard,
                r.prune.unresolved_spends,
                r.interval
            );
        }
        Cmd::Serve { state, listen, readers, chain, poll_ms } => {
            let root = attest_root_from_env()?;
            let mut node = Node::open(&state, &root).with_context(|| format!("open {}", state.display()))?;
            if let Some(ms) = poll_ms {
                node.cfg.poll_interval_ms = ms;
            }
            let addr = listen.unwrap_or_else(|| node.cfg.listen.clone());
            let readers = readers.unwrap_or(node.cfg.readers);
            let source: Option<Box<dyn BlockSource>> =
                chain.or_else(|| node.cfg.chain_dir.clone()).map(|d| Box::new(DirBlockSource::new(d)) as Box<dyn BlockSource>);
            let listener = TcpListener::bind(&addr).with_context(|| format!("bind {addr}"))?;
            let server = RunningServer::start(Arc::new(node), root, listener, readers, source)?;
            let st = server.stats();
            println!("listening on {} readers={} interval={}", server.local_addr(), readers, st.interval);
            loop {
                std::thread::park();
            }
        }
        Cmd::Config => print!("{}", ServiceConfig::default().to_toml()),
    }
    Ok(())
}
