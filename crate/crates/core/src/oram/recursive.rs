//! Recursive tree-based ORAM: a data tree plus position-map trees, with a
//! small plaintext top map.
//!
//! Level 0 holds data blocks. Level `j ≥ 1` holds blocks of `chi` big-endian
//! 4-byte leaf labels for the blocks of level `j − 1`. The top map holds the
//! labels of the outermost level.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::block::OramBlock;
use super::evict::{evict, reverse_lexicographic_paths, CIRCUIT_EVICTIONS_PER_ACCESS};
use super::stash::Stash;
use super::trace::{PathOp, TraceEvent, TraceLog};
use super::tree::{path_node, OramTree};
use super::{OramError, OramParams, Strategy, LEAF_LABEL_BYTES};
use crate::crypto::{derive_key, Hash32, KEY_LEN};
use crate::enclave::oblivious::{oblivious_read_u32, oblivious_swap_u32, ConstantTimeEq, CtAssign};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Read,
    Write,
}

/// One tree with its stash.
#[derive(Clone, Debug)]
pub struct Level {
    pub params: OramParams,
    pub tree: OramTree,
    pub stash: Stash,
    evict_counter: u64,
}

/// Everything a reader needs: trees, stashes and the top map. Immutable use
/// (`read_once`, `label_of`) never writes any of it.
#[derive(Clone, Debug)]
pub struct OramState {
    params: OramParams,
    levels: Vec<Level>,
    top_map: Vec<u32>,
}

/// Trusted per-level metadata that must be persisted alongside tree files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LevelMeta {
    pub params: OramParams,
    #[serde(with = "hex_array")]
    pub root: Hash32,
    pub evict_counter: u64,
    /// Real stash blocks, each `bid ‖ leaf ‖ payload`.
    pub stash: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct OramMeta {
    pub params: OramParams,
    pub levels: Vec<LevelMeta>,
    pub top_map: Vec<u32>,
}

/// The writable ORAM: state plus the randomness of the single writer.
pub struct Oram {
    state: OramState,
    leaf_rng: ChaCha20Rng,
    nonce_rng: ChaCha20Rng,
    trace: Option<Arc<TraceLog>>,
    stash_high_water: Vec<usize>,
}

impl std::fmt::Debug for Oram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oram").field("state", &self.state).finish()
    }
}

/// Per-level AEAD key.
pub fn level_key(master: &[u8; KEY_LEN], level: usize) -> [u8; KEY_LEN] {
    derive_key(master, b"t3-oram-level", &(level as u32).to_be_bytes())
}

fn read_label(payload: &[u8], off: usize) -> u32 {
    u32::from_be_bytes(payload[off..off + LEAF_LABEL_BYTES].try_into().unwrap())
}

impl Oram {
    /// Empty data tree; position-map trees are bulk-loaded with independent
    /// uniform labels drawn from `seed`.
    pub fn init(params: OramParams, master_key: &[u8; KEY_LEN], seed: u64) -> Result<Self, OramError> {
        params.validate()?;
        let mut leaf_rng = ChaCha20Rng::seed_from_u64(seed);
        let mut nonce_rng = ChaCha20Rng::from_entropy();

        let n = params.capacity_n;
        let mut labels: Vec<u32> = (0..n).map(|_| leaf_rng.gen_range(0..n)).collect();
        let mut levels = vec![Level {
            params,
            tree: OramTree::new_empty(&params, &level_key(master_key, 0), &mut nonce_rng),
            stash: Stash::new(params.max_stash, params.payload_bytes),
            evict_counter: 0,
        }];

        for (j, mp) in params.map_levels().into_iter().enumerate() {
            mp.validate()?;
            let chi = mp.recursion_chi;
            let blocks = labels.len().div_ceil(chi);
            let own: Vec<u32> = (0..blocks).map(|_| leaf_rng.gen_range(0..mp.capacity_n)).collect();
            let height = mp.height();
            let mut buckets = vec![Vec::new(); mp.bucket_count()];
            let mut stash = Stash::new(mp.max_stash, mp.payload_bytes);
            for (b, chunk) in labels.chunks(chi).enumerate() {
                let mut payload = vec![0u8; mp.payload_bytes];
                for (k, l) in chunk.iter().enumerate() {
                    payload[k * LEAF_LABEL_BYTES..(k + 1) * LEAF_LABEL_BYTES].copy_from_slice(&l.to_be_bytes());
                }
                let block = OramBlock::new(b as u32, own[b], payload.into_boxed_slice());
                let slot = (0..=height)
                    .rev()
                    .map(|d| path_node(height, own[b], d))
                    .find(|&node| buckets[node].len() < mp.bucket_z);
                match slot {
                    Some(node) => buckets[node].push(block),
                    None => stash.put(block)?,
                }
            }
            let tree = OramTree::from_buckets(&mp, &level_key(master_key, j + 1), buckets, &mut nonce_rng);
            levels.push(Level { params: mp, tree, stash, evict_counter: 0 });
            labels = own;
        }

        let depth = levels.len();
        Ok(Oram {
            state: OramState { params, levels, top_map: labels },
            leaf_rng,
            nonce_rng,
            trace: None,
            stash_high_water: vec![0; depth],
        })
    }

    /// Rebuilds a writer around persisted state.
    pub fn from_state(state: OramState, seed: u64) -> Self {
        let depth = state.levels.len();
        Oram {
            state,
            leaf_rng: ChaCha20Rng::seed_from_u64(seed),
            nonce_rng: ChaCha20Rng::from_entropy(),
            trace: None,
            stash_high_water: vec![0; depth],
        }
    }

    pub fn params(&self) -> &OramParams {
        &self.state.params
    }

    pub fn state(&self) -> &OramState {
        &self.state
    }

    /// Mutable state, as an adversarial host sees the untrusted parts.
    pub fn state_mut(&mut self) -> &mut OramState {
        &mut self.state
    }

    pub fn snapshot(&self) -> OramState {
        self.state.clone()
    }

    pub fn set_trace(&mut self, trace: Option<Arc<TraceLog>>) {
        self.trace = trace;
    }

    /// Largest post-access stash occupancy seen per level.
    pub fn stash_high_water(&self) -> &[usize] {
        &self.stash_high_water
    }

    fn record(&self, ev: TraceEvent) {
        if let Some(t) = &self.trace {
            t.record(ev);
        }
    }

    pub fn read(&mut self, bid: u32) -> Result<Box<[u8]>, OramError> {
        self.access(Op::Read, bid, None)
    }

    pub fn write(&mut self, bid: u32, data: &[u8]) -> Result<Box<[u8]>, OramError> {
        self.access(Op::Write, bid, Some(data))
    }

    /// Standard access; returns the payload held before the access.
    pub fn access(&mut self, op: Op, bid: u32, data: Option<&[u8]>) -> Result<Box<[u8]>, OramError> {
        if op == Op::Write {
            let d = data.ok_or_else(|| OramError::InvalidParams("write without data".into()))?;
            if d.len() != self.state.params.payload_bytes {
                return Err(OramError::PayloadLength {
                    expected: self.state.params.payload_bytes,
                    got: d.len(),
                });
            }
        }
        self.access_with(bid, |payload| {
            if let (Op::Write, Some(d)) = (op, data) {
                payload.copy_from_slice(d);
            }
        })
    }

    /// Read-modify-write in a single access. `update` sees the current payload
    /// (zeros if never written).
    pub fn access_with<F>(&mut self, bid: u32, update: F) -> Result<Box<[u8]>, OramError>
    where
        F: FnOnce(&mut [u8]),
    {
        self.state.check_bid(bid)?;
        let new_leaf = self.leaf_rng.gen_range(0..self.state.params.capacity_n);
        let old_leaf = self.swap_label(bid, Some(new_leaf))?;
        self.level_access(0, bid, old_leaf, new_leaf, update)
    }

    /// Leaf currently assigned to `bid`, via pattern-hiding accesses on the
    /// position-map trees.
    pub fn posmap_lookup(&mut self, bid: u32) -> Result<u32, OramError> {
        self.state.check_bid(bid)?;
        self.swap_label(bid, None)
    }

    /// Overwrites `bid`'s label. Low level: the block itself is not moved, so
    /// callers must relocate it to keep the map truthful.
    pub fn posmap_update(&mut self, bid: u32, new_leaf: u32) -> Result<u32, OramError> {
        self.state.check_bid(bid)?;
        if new_leaf >= self.state.params.capacity_n {
            return Err(OramError::LeafOutOfRange { leaf: new_leaf, leaves: self.state.params.capacity_n });
        }
        self.swap_label(bid, Some(new_leaf))
    }

    /// Walks the position-map levels from the top, remapping every map block
    /// it touches; returns the old label of data block `bid` and optionally
    /// replaces it.
    fn swap_label(&mut self, bid: u32, replacement: Option<u32>) -> Result<u32, OramError> {
        let depth = self.state.levels.len();
        let chi = self.state.params.recursion_chi as u32;
        if depth == 1 {
            let top_entries = self.state.top_map.len() as u32;
            self.record(TraceEvent::TopMapScan { entries: top_entries });
            return Ok(oblivious_swap_u32(&mut self.state.top_map, bid as usize, replacement));
        }
        let mut ids = vec![bid; depth];
        for j in 1..depth {
            ids[j] = ids[j - 1] / chi;
        }
        let mut new_leaves = vec![0u32; depth];
        for (j, leaf) in new_leaves.iter_mut().enumerate().skip(1) {
            *leaf = self.leaf_rng.gen_range(0..self.state.levels[j].params.capacity_n);
        }
        let top_entries = self.state.top_map.len() as u32;
        self.record(TraceEvent::TopMapScan { entries: top_entries });
        let mut leaf = oblivious_swap_u32(
            &mut self.state.top_map,
            ids[depth - 1] as usize,
            Some(new_leaves[depth - 1]),
        );
        for j in (1..depth).rev() {
            let off = (ids[j - 1] % chi) as usize * LEAF_LABEL_BYTES;
            let set = if j == 1 { replacement } else { Some(new_leaves[j - 1]) };
            let mut old = 0u32;
            self.level_access(j, ids[j], leaf, new_leaves[j], |p| {
                old = read_label(p, off);
                if let Some(v) = set {
                    p[off..off + LEAF_LABEL_BYTES].copy_from_slice(&v.to_be_bytes());
                }
            })?;
            leaf = old;
        }
        Ok(leaf)
    }

    /// One tree access: read path `leaf`, pull `bid` out of path ∪ stash,
    /// update it, remap it to `new_leaf`, evict.
    fn level_access<F>(
        &mut self,
        level: usize,
        bid: u32,
        leaf: u32,
        new_leaf: u32,
        update: F,
    ) -> Result<Box<[u8]>, OramError>
    where
        F: FnOnce(&mut [u8]),
    {
        let trace = self.trace.clone();
        let record = |ev| {
            if let Some(t) = &trace {
                t.record(ev);
            }
        };
        let lvl = &mut self.state.levels[level];
        let strategy = lvl.params.strategy;
        let path_slots = lvl.params.slots_per_path() as u32;
        let l8 = level as u8;

        let mut path = lvl.tree.read_path(leaf)?;
        record(TraceEvent::Path { level: l8, leaf, op: PathOp::Read, slots: path_slots });
        let from_stash = lvl.stash.take(bid);
        record(TraceEvent::StashScan { level: l8, slots: lvl.stash.capacity() as u32 });

        let payload_bytes = lvl.params.payload_bytes;
        let mut block = from_stash;
        let mut pending = Vec::with_capacity(path.len());
        for slot in path.iter_mut() {
            if slot.is_dummy() {
                continue;
            }
            if slot.bid == bid {
                block = Some(std::mem::replace(slot, OramBlock::dummy(payload_bytes)));
            } else if strategy == Strategy::PathOram {
                pending.push(slot.clone());
            }
        }
        let mut block = block
            .unwrap_or_else(|| OramBlock::new(bid, new_leaf, vec![0u8; payload_bytes].into_boxed_slice()));
        let before = block.payload.clone();
        update(&mut block.payload);
        block.leaf = new_leaf;
        pending.push(block);

        match strategy {
            Strategy::PathOram => {
                evict(strategy, &mut lvl.tree, &mut lvl.stash, pending, &[leaf], &mut self.nonce_rng)?;
                record(TraceEvent::Path { level: l8, leaf, op: PathOp::Write, slots: path_slots });
            }
            Strategy::CircuitOram => {
                // The read path goes back with the accessed block removed.
                lvl.tree.write_path(leaf, &path, &mut self.nonce_rng)?;
                record(TraceEvent::Path { level: l8, leaf, op: PathOp::Write, slots: path_slots });
                let paths = reverse_lexicographic_paths(
                    lvl.evict_counter,
                    lvl.tree.height(),
                    CIRCUIT_EVICTIONS_PER_ACCESS,
                );
                lvl.evict_counter += paths.len() as u64;
                evict(strategy, &mut lvl.tree, &mut lvl.stash, pending, &paths, &mut self.nonce_rng)?;
                for p in paths {
                    record(TraceEvent::Path { level: l8, leaf: p, op: PathOp::Read, slots: path_slots });
                    record(TraceEvent::Path { level: l8, leaf: p, op: PathOp::Write, slots: path_slots });
                }
            }
        }
        let occ = lvl.stash.occupancy();
        let hw = &mut self.stash_high_water[level];
        *hw = (*hw).max(occ);
        Ok(before)
    }
}

impl OramState {
    pub fn params(&self) -> &OramParams {
        &self.params
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Level] {
        &mut self.levels
    }

    pub fn top_map(&self) -> &[u32] {
        &self.top_map
    }

    pub fn data_tree(&self) -> &OramTree {
        &self.levels[0].tree
    }

    pub fn data_tree_mut(&mut self) -> &mut OramTree {
        &mut self.levels[0].tree
    }

    fn check_bid(&self, bid: u32) -> Result<(), OramError> {
        if bid >= self.params.capacity_n {
            return Err(OramError::BidOutOfRange { bid, n: self.params.capacity_n });
        }
        Ok(())
    }

    /// Read-only access: no eviction, no remapping, no writes to trees,
    /// stashes or maps. Returns zeros for a block never written.
    pub fn read_once(&self, bid: u32, trace: Option<&TraceLog>) -> Result<Box<[u8]>, OramError> {
        self.check_bid(bid)?;
        let leaf = self.label_traced(bid, trace)?;
        self.level_read(0, bid, leaf, trace)
    }

    /// Current label of `bid` without modifying anything.
    pub fn label_of(&self, bid: u32) -> Result<u32, OramError> {
        self.check_bid(bid)?;
        self.label_traced(bid, None)
    }

    fn label_traced(&self, bid: u32, trace: Option<&TraceLog>) -> Result<u32, OramError> {
        let depth = self.levels.len();
        let chi = self.params.recursion_chi as u32;
        let mut ids = vec![bid; depth];
        for j in 1..depth {
            ids[j] = ids[j - 1] / chi;
        }
        if let Some(t) = trace {
            t.record(TraceEvent::TopMapScan { entries: self.top_map.len() as u32 });
        }
        let mut leaf = oblivious_read_u32(&self.top_map, ids[depth - 1] as usize);
        for j in (1..depth).rev() {
            let off = (ids[j - 1] % chi) as usize * LEAF_LABEL_BYTES;
            let payload = self.level_read(j, ids[j], leaf, trace)?;
            leaf = read_label(&payload, off);
        }
        Ok(leaf)
    }

    fn level_read(&self, level: usize, bid: u32, leaf: u32, trace: Option<&TraceLog>) -> Result<Box<[u8]>, OramError> {
        let lvl = &self.levels[level];
        let path = lvl.tree.read_path(leaf)?;
        if let Some(t) = trace {
            t.record(TraceEvent::Path {
                level: level as u8,
                leaf,
                op: PathOp::Read,
                slots: lvl.params.slots_per_path() as u32,
            });
            t.record(TraceEvent::StashScan { level: level as u8, slots: lvl.stash.capacity() as u32 });
        }
        // Caller-local scratch: the union of the shared stash and the fetched
        // path, scanned in full.
        let mut out = vec![0u8; lvl.params.payload_bytes].into_boxed_slice();
        for b in lvl.stash.slots().iter().chain(path.iter()) {
            let hit = b.bid.ct_eq(&bid) & !b.bid.ct_eq(&super::DUMMY_BID);
            out.ct_assign(&b.payload, hit);
        }
        Ok(out)
    }

    pub fn meta(&self) -> OramMeta {
        OramMeta {
            params: self.params,
            levels: self
                .levels
                .iter()
                .map(|l| LevelMeta {
                    params: l.params,
                    root: l.tree.integrity_root(),
                    evict_counter: l.evict_counter,
                    stash: l
                        .stash
                        .slots()
                        .iter()
                        .filter(|b| !b.is_dummy())
                        .map(|b| {
                            let mut buf = vec![0u8; OramBlock::encoded_len(b.payload.len())];
                            b.encode_into(&mut buf);
                            hex::encode(buf)
                        })
                        .collect(),
                })
                .collect(),
            top_map: self.top_map.clone(),
        }
    }

    /// File names for level `j` under `prefix`: data tree first.
    pub fn level_files(dir: &std::path::Path, prefix: &str, level: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let stem = if level == 0 { prefix.to_string() } else { format!("{prefix}.pm{level}") };
        (dir.join(format!("{stem}.tree")), dir.join(format!("{stem}.merkle")))
    }

    pub fn save(&self, dir: &std::path::Path, prefix: &str) -> Result<(), OramError> {
        for (j, l) in self.levels.iter().enumerate() {
            let (t, s) = Self::level_files(dir, prefix, j);
            l.tree.save(&t, &s)?;
        }
        Ok(())
    }

    pub fn load(
        dir: &std::path::Path,
        prefix: &str,
        meta: &OramMeta,
        master_key: &[u8; KEY_LEN],
    ) -> Result<Self, OramError> {
        let mut levels = Vec::with_capacity(meta.levels.len());
        for (j, lm) in meta.levels.iter().enumerate() {
            let (t, s) = Self::level_files(dir, prefix, j);
            let tree = OramTree::load(&lm.params, &level_key(master_key, j), &t, &s, lm.root)?;
            let mut stash = Stash::new(lm.params.max_stash, lm.params.payload_bytes);
            for enc in &lm.stash {
                let bytes = hex::decode(enc).map_err(|e| OramError::BadFile(e.to_string()))?;
                if bytes.len() != OramBlock::encoded_len(lm.params.payload_bytes) {
                    return Err(OramError::BadFile("stash block length".into()));
                }
                stash.put(OramBlock::decode(&bytes))?;
            }
            levels.push(Level { params: lm.params, tree, stash, evict_counter: lm.evict_counter });
        }
        Ok(OramState { params: meta.params, levels, top_map: meta.top_map.clone() })
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(serde::de::Error::custom)?;
        v.try_into().map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}
