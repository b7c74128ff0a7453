use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use t3_core::chain::HeaderChain;
use t3_core::crypto::Hash160Mode;
use t3_core::enclave::attest::{measure, BUILD_IDENTITY};
use t3_core::service::client::{sync_headers_from_path, sync_headers_from_server, CLIENT_HEADERS_KEY};
use t3_core::service::{attest_root_from_env, parse_keyfile, proof_for, Client, ServiceError};

/// Light client for the oblivious UTXO server.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum HashMode {
    Ripemd,
    TruncatedSha256,
}

#[derive(Subcommand)]
enum Cmd {
    /// Query the unspent outputs of addresses the keyfile owns.
    Query {
        #[arg(long)]
        server: String,
        /// Lines of `hex pubkey[,hex privkey]`.
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        json: bool,
        /// Blocks to read per address, when the server lets clients choose.
        #[arg(long)]
        delta: Option<u8>,
        /// Local header file to check the answer's interval against.
        #[arg(long)]
        headers: Option<PathBuf>,
        /// Expected enclave measurement (hex); defaults to this build's.
        #[arg(long)]
        measurement: Option<String>,
        #[arg(long, value_enum, default_value = "ripemd")]
        hash160: HashMode,
        /// Address hashes, 20 bytes hex.
        #[arg(required = true)]
        pkh: Vec<String>,
    },
    /// Fetch and verify block headers into a local file.
    HeadersSync {
        #[arg(long, conflicts_with = "from", required_unless_present = "from")]
        server: Option<String>,
        /// Block directory or raw 80-byte header file.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value = "headers.dat")]
        out: PathBuf,
        #[arg(long)]
        measurement: Option<String>,
    },
}

#[derive(Serialize)]
struct JsonRecord {
    txid: String,
    vout: u32,
    amount: u64,
    height: u32,
}

#[derive(Serialize)]
struct JsonAnswer {
    pkh: String,
    interval: Option<u64>,
    error: Option<String>,
    records: Vec<JsonRecord>,
}

fn connect(server: &str, measurement: Option<&str>) -> anyhow::Result<Client> {
    let root = attest_root_from_env()?;
    let m = match measurement {
        Some(h) => hex::decode(h).ok().and_then(|v| v.try_into().ok()).context("measurement must be 32 hex bytes")?,
        None => measure(BUILD_IDENTITY),
    };
    Client::connect(server, &root, &m).with_context(|| format!("attest {server}"))
}

fn load_headers(path: &Path) -> anyhow::Result<HeaderChain> {
    if path.exists() {
        Ok(HeaderChain::load(path, CLIENT_HEADERS_KEY, None).with_context(|| format!("load {}", path.display()))?)
    } else {
        Ok(HeaderChain::new(None))
    }
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Query { server, keys, json, delta, headers, measurement, hash160, pkh } => {
            let mode = match hash160 {
                HashMode::Ripemd => Hash160Mode::Ripemd,
                HashMode::TruncatedSha256 => Hash160Mode::TruncatedSha256,
            };
            let keys = parse_keyfile(&std::fs::read_to_string(&keys).with_context(|| format!("read {}", keys.display()))?)?;
            if keys.is_empty() {
                bail!("keyfile has no keys");
            }
            let mut pkhs = Vec::new();
            for p in &pkh {
                let b: [u8; 20] = hex::decode(p).ok().and_then(|v| v.try_into().ok()).with_context(|| format!("bad pkh {p}"))?;
                pkhs.push(b);
            }
            let local = headers.as_deref().map(load_headers).transpose()?;
            let mut client = connect(&server, measurement.as_deref())?;
            let mut failed = false;
            let mut answers = Vec::new();
            for (text, p) in pkh.iter().zip(&pkhs) {
                let proof = proof_for(&keys, p, mode, &client.binding_nonce()).expect("keys not empty");
                match client.query(proof, delta) {
                    Ok(resp) => {
                        if let Some(chain) = &local {
                            let have = chain.len() as u64;
                            if resp.interval < have {
                                eprintln!("warning: answer for {text} is from interval {} but local headers reach {have}", resp.interval);
                            } else if resp.interval > have {
                                eprintln!("note: server is at interval {}, local headers at {have}; run headers-sync", resp.interval);
                            }
                        }
                        let recs: Vec<_> = resp.real().collect();
                        if json {
                            answers.push(JsonAnswer {
                                pkh: text.clone(),
                                interval: Some(resp.interval),
                                error: None,
                                records: recs
                                    .iter()
                                    .map(|r| JsonRecord { txid: r.txid_display(), vout: r.vout, amount: r.amount, height: r.height })
                                    .collect(),
                            });
                        } else {
                            for r in recs {
                                println!("{}\t{}\t{}\t{}", r.txid_display(), r.vout, r.amount, r.height);
                            }
                        }
                    }
                    Err(ServiceError::Remote(code)) => {
                        failed = true;
                        eprintln!("{text}: server error {code}");
                        if json {
                            answers.push(JsonAnswer { pkh: text.clone(), interval: None, error: Some(code.to_string()), records: vec![] });
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&answers)?);
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Cmd::HeadersSync { server, from, out, measurement } => {
            let mut chain = load_headers(&out)?;
            let added = match (server, from) {
                (Some(s), _) => sync_headers_from_server(&mut connect(&s, measurement.as_deref())?, &mut chain)?,
                (None, Some(p)) => sync_headers_from_path(&p, &mut chain)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            chain.save(&out, CLIENT_HEADERS_KEY)?;
            match chain.tip() {
                Some(tip) => {
                    let mut id = tip.hash();
                    id.reverse();
                    println!("added {added} headers; tip height {} {}", chain.len() - 1, hex::encode(id));
                }
                None => println!("no headers"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
