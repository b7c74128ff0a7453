use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::crypto::Hash160Mode;
use crate::enclave::ProofMode;
use crate::oram::{default_max_stash, OramParams, Strategy, DEFAULT_RECURSION_CHI};
use crate::store::{store_params, StoreConfig};

/// Daemon configuration, read from one TOML file with CLI overrides on top.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub n: u32,
    pub strategy: Strategy,
    pub bucket_z: Option<usize>,
    pub recursion_chi: usize,
    pub max_stash: Option<usize>,
    pub store: StoreConfig,
    pub listen: String,
    pub readers: usize,
    pub poll_interval_ms: u64,
    pub state_dir: PathBuf,
    pub chain_dir: Option<PathBuf>,
    pub hash160: Hash160Mode,
    pub proof_mode: ProofMode,
    /// Hex hash the first header must have, if pinned.
    pub genesis: Option<String>,
    /// Write tree files back after every accepted block.
    pub persist_on_sync: bool,
    /// Seeds the writer's leaf randomness at init, for reproducible layouts.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            n: 1 << 12,
            strategy: Strategy::CircuitOram,
            bucket_z: None,
            recursion_chi: DEFAULT_RECURSION_CHI,
            max_stash: None,
            store: StoreConfig::default(),
            listen: "127.0.0.1:8333".into(),
            readers: 4,
            poll_interval_ms: 1000,
            state_dir: PathBuf::from("t3-state"),
            chain_dir: None,
            hash160: Hash160Mode::Ripemd,
            proof_mode: ProofMode::Preimage,
            genesis: None,
            persist_on_sync: true,
            seed: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn oram_params(&self) -> OramParams {
        let mut p = store_params(self.n, self.strategy, &self.store);
        if let Some(z) = self.bucket_z {
            p.bucket_z = z;
            p.max_stash = default_max_stash(self.n, z);
        }
        p.recursion_chi = self.recursion_chi;
        if let Some(s) = self.max_stash {
            p.max_stash = s;
        }
        p
    }

    pub fn genesis_hash(&self) -> Result<Option<[u8; 32]>, ServiceError> {
        self.genesis
            .as_deref()
            .map(|s| {
                let mut b: [u8; 32] = hex::decode(s)
                    .ok()
                    .and_then(|v| v.try_into().ok())
                    .ok_or_else(|| ServiceError::Config("genesis must be 32 hex bytes".into()))?;
                // Displayed hashes are byte-reversed.
                b.reverse();
                Ok(b)
            })
            .transpose()
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.oram_params().validate()?;
        if self.readers == 0 {
            return Err(ServiceError::Config("readers must be at least 1".into()));
        }
        if self.store.max_out == 0 || self.store.max_out > u16::MAX as usize {
            return Err(ServiceError::Config("max_out out of range".into()));
        }
        if self.store.delta_max == 0 || self.store.delta_max > 255 {
            return Err(ServiceError::Config("delta_max must be in 1..=255".into()));
        }
        self.genesis_hash()?;
        Ok(())
    }
}
