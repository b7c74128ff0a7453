//! Trusted application state: the store, the header chain, and the secrets
//! they run under, with sealed persistence in a state directory.
//!
//! State directory:
//! `original.tree`, `original.merkle`, `snapshot.tree`, `snapshot.merkle`
//! (plus `.pmN.*` files for position-map levels), `headers.dat`, and the
//! sealed `state.key` and `state.meta`.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{ServiceConfig, ServiceError};
use crate::chain::{prune, Block, BlockSource, ChainError, HeaderChain, PruneStats};
use crate::enclave::attest::{measure, BUILD_IDENTITY};
use crate::enclave::{OwnershipVerifier, SealingKey};
use crate::oram::{Oram, OramMeta, OramState};
use crate::store::{Store, StoreKeys, UpdateSummary};
use crate::utxo::MapKey;

pub const ORIGINAL_PREFIX: &str = "original";
pub const SNAPSHOT_PREFIX: &str = "snapshot";
pub const HEADERS_FILE: &str = "headers.dat";
pub const KEY_FILE: &str = "state.key";
pub const META_FILE: &str = "state.meta";

#[derive(Serialize, Deserialize)]
struct Secrets {
    oram_master: String,
    map_key: String,
    chain_key: String,
}

#[derive(Serialize, Deserialize)]
struct PersistedMeta {
    config: ServiceConfig,
    original: OramMeta,
    snapshot: OramMeta,
    interval: u64,
}

/// Sealing key for this build's measurement.
pub fn sealing_key(attest_root: &[u8]) -> SealingKey {
    SealingKey::derive(attest_root, &measure(BUILD_IDENTITY))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InitReport {
    pub blocks: u32,
    pub creates: u64,
    pub spends: u64,
    pub spends_missing: u64,
    pub block_full: u64,
    pub prune: PruneStats,
    pub interval: u64,
}

pub struct Node {
    pub cfg: ServiceConfig,
    pub store: Arc<Store>,
    chain: RwLock<HeaderChain>,
    ingest: Mutex<()>,
    chain_key: [u8; 32],
    oram_master: [u8; 32],
    sealing: SealingKey,
    state_dir: Option<PathBuf>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("cfg", &self.cfg).field("state_dir", &self.state_dir).finish()
    }
}

fn hex32(s: &str) -> Result<[u8; 32], ServiceError> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| ServiceError::State("bad key encoding".into()))
}

impl Node {
    /// Builds both trees by replaying every block `source` has from height 0,
    /// then syncs once. With `persist`, writes the state directory.
    pub fn init(
        cfg: ServiceConfig,
        source: &dyn BlockSource,
        attest_root: &[u8],
        persist: bool,
    ) -> Result<(Node, InitReport), ServiceError> {
        cfg.validate()?;
        let mut rng = match cfg.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let mut secret = || {
            let mut k = [0u8; 32];
            rng.fill_bytes(&mut k);
            k
        };
        let (oram_master, map_key, chain_key) = (secret(), secret(), secret());
        let keys = StoreKeys { oram_master, map_key: MapKey::from_bytes(map_key) };
        let writer_seed = cfg.seed.unwrap_or_else(rand::random);
        let store = Store::create(cfg.oram_params(), keys, cfg.store, writer_seed)?
            .with_verifier(OwnershipVerifier::new(cfg.proof_mode, cfg.hash160));
        let node = Node {
            chain: RwLock::new(HeaderChain::new(cfg.genesis_hash()?)),
            state_dir: persist.then(|| cfg.state_dir.clone()),
            cfg,
            store: Arc::new(store),
            ingest: Mutex::new(()),
            chain_key,
            oram_master,
            sealing: sealing_key(attest_root),
        };

        let mut report = InitReport::default();
        loop {
            let height = report.blocks;
            let Some(block) = source.block_at(height).map_err(|e| ServiceError::Block { height, source: e })? else {
                break;
            };
            let (s, p) = node.apply_verified(height, &block, false)?;
            report.blocks += 1;
            report.creates += s.creates;
            report.spends += s.spends;
            report.spends_missing += s.spends_missing;
            report.block_full += s.block_full;
            report.prune.nulldata += p.nulldata;
            report.prune.nonstandard += p.nonstandard;
            report.prune.unresolved_spends += p.unresolved_spends;
        }
        report.interval = node.store.sync_to(report.blocks as u64)?;
        if persist {
            std::fs::create_dir_all(&node.cfg.state_dir)?;
            let secrets = Secrets {
                oram_master: hex::encode(node.oram_master),
                map_key: hex::encode(map_key),
                chain_key: hex::encode(node.chain_key),
            };
            let blob = node.sealing.seal(KEY_FILE, &serde_json::to_vec(&secrets).unwrap());
            write_atomic(&node.cfg.state_dir.join(KEY_FILE), &blob)?;
            node.persist()?;
        }
        Ok((node, report))
    }

    /// Reopens a persisted state directory.
    pub fn open(state_dir: &Path, attest_root: &[u8]) -> Result<Node, ServiceError> {
        let sealing = sealing_key(attest_root);
        let secrets: Secrets = serde_json::from_slice(&sealing.unseal(KEY_FILE, &std::fs::read(state_dir.join(KEY_FILE))?)?)
            .map_err(|e| ServiceError::State(e.to_string()))?;
        let meta: PersistedMeta =
            serde_json::from_slice(&sealing.unseal(META_FILE, &std::fs::read(state_dir.join(META_FILE))?)?)
                .map_err(|e| ServiceError::State(e.to_string()))?;
        let oram_master = hex32(&secrets.oram_master)?;
        let chain_key = hex32(&secrets.chain_key)?;
        let map_key = MapKey::from_bytes(hex32(&secrets.map_key)?);
        let original = OramState::load(state_dir, ORIGINAL_PREFIX, &meta.original, &oram_master)?;
        let snapshot = OramState::load(state_dir, SNAPSHOT_PREFIX, &meta.snapshot, &oram_master)?;
        let mut cfg = meta.config;
        cfg.state_dir = state_dir.to_path_buf();
        let chain = HeaderChain::load(&state_dir.join(HEADERS_FILE), &chain_key, cfg.genesis_hash()?)?;
        let store = Store::from_parts(Oram::from_state(original, rand::random()), Some(snapshot), meta.interval, map_key, cfg.store)?
            .with_verifier(OwnershipVerifier::new(cfg.proof_mode, cfg.hash160));
        Ok(Node {
            cfg,
            store: Arc::new(store),
            chain: RwLock::new(chain),
            ingest: Mutex::new(()),
            chain_key,
            oram_master,
            sealing,
            state_dir: Some(state_dir.to_path_buf()),
        })
    }

    pub fn state_dir(&self) -> Option<&Path> {
        self.state_dir.as_deref()
    }

    pub fn tip_height(&self) -> Option<u32> {
        self.chain.read().unwrap().tip_height()
    }

    pub fn with_chain<T>(&self, f: impl FnOnce(&HeaderChain) -> T) -> T {
        f(&self.chain.read().unwrap())
    }

    /// Writes trees, sidecars, headers and sealed metadata. When the
    /// original has not moved since the last sync, the snapshot files are
    /// plain copies of the original's.
    pub fn persist(&self) -> Result<(), ServiceError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let (snap_meta, interval) = self.store.with_snapshot(|s, i| (s.meta(), i));
        let orig_meta = self.store.with_original(|o| -> Result<OramMeta, ServiceError> {
            o.state().save(dir, ORIGINAL_PREFIX)?;
            Ok(o.state().meta())
        })?;
        if orig_meta == snap_meta {
            for j in 0..orig_meta.levels.len() {
                let (ot, om) = OramState::level_files(dir, ORIGINAL_PREFIX, j);
                let (st, sm) = OramState::level_files(dir, SNAPSHOT_PREFIX, j);
                std::fs::copy(ot, st)?;
                std::fs::copy(om, sm)?;
            }
        } else {
            self.store.with_snapshot(|s, _| s.save(dir, SNAPSHOT_PREFIX))?;
        }
        self.chain.read().unwrap().save(&dir.join(HEADERS_FILE), &self.chain_key)?;
        let meta = PersistedMeta { config: self.cfg.clone(), original: orig_meta, snapshot: snap_meta, interval };
        let blob = self.sealing.seal(META_FILE, &serde_json::to_vec(&meta).unwrap());
        write_atomic(&dir.join(META_FILE), &blob)?;
        Ok(())
    }

    /// Fetches and applies the block after the tip, if the source has it.
    pub fn ingest_next(&self, source: &dyn BlockSource) -> Result<Option<UpdateSummary>, ServiceError> {
        let height = self.tip_height().map_or(0, |h| h + 1);
        let Some(block) = source.block_at(height).map_err(|e| ServiceError::Block { height, source: e })? else {
            return Ok(None);
        };
        self.ingest_block(height, &block).map(Some)
    }

    /// Verifies and applies one block at `height`, then syncs. Nothing in
    /// the store changes unless the header and body verify.
    pub fn ingest_block(&self, height: u32, block: &Block) -> Result<UpdateSummary, ServiceError> {
        let (summary, _) = self.apply_verified(height, block, true)?;
        if self.cfg.persist_on_sync {
            self.persist()?;
        }
        Ok(summary)
    }

    fn apply_verified(&self, height: u32, block: &Block, sync: bool) -> Result<(UpdateSummary, PruneStats), ServiceError> {
        let _guard = self.ingest.lock().unwrap();
        let at = |e: ChainError| ServiceError::Block { height, source: e };
        {
            let chain = self.chain.read().unwrap();
            if chain.tip_height().map_or(0, |h| h + 1) != height {
                return Err(at(ChainError::BadLink));
            }
            chain.verify_header(&block.header).map_err(at)?;
        }
        if !block.verify_body() {
            return Err(at(ChainError::BadMerkle));
        }
        let (batch, stats) = prune(block, height, self.cfg.hash160).map_err(at)?;
        let summary = if sync {
            let mut s = self.store.apply_updates(&batch)?;
            s.interval = self.store.sync_to(height as u64 + 1)?;
            s
        } else {
            self.store.apply_updates(&batch)?
        };
        if summary.block_full > 0 {
            log::warn!("height {height}: {} outputs dropped on full blocks", summary.block_full);
        }
        self.chain.write().unwrap().append(block.header).map_err(at)?;
        Ok((summary, stats))
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, data)?;
    std::fs::rename(tmp, path)
}
