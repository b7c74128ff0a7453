//! Network front end: attestation, sealed queries, header serving, and the
//! block ingest loop.

pub mod client;
mod config;
pub mod node;
pub mod server;
pub mod wire;

pub use client::{parse_keyfile, proof_for, Client, KeyEntry};
pub use config::ServiceConfig;
pub use node::{InitReport, Node};
pub use server::RunningServer;
pub use wire::{ErrorCode, Message};

use crate::chain::ChainError;
use crate::enclave::EnclaveError;
use crate::oram::OramError;
use crate::store::StoreError;

pub const ATTEST_ROOT_ENV: &str = "T3_ATTEST_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("state: {0}")]
    State(String),
    #[error("block at height {height}: {source}")]
    Block { height: u32, source: ChainError },
    #[error("server returned {0}")]
    Remote(ErrorCode),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Oram(#[from] OramError),
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Wire(#[from] wire::WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads the attestation root key from `T3_ATTEST_ROOT`.
pub fn attest_root_from_env() -> Result<Vec<u8>, ServiceError> {
    let v = std::env::var(ATTEST_ROOT_ENV).map_err(|_| ServiceError::Config(format!("{ATTEST_ROOT_ENV} is not set")))?;
    Ok(crate::enclave::attest::parse_root_key(&v)?)
}
