//! Two-tree UTXO store.
//!
//! Readers answer queries with `read_once` against an immutable snapshot of
//! the ORAM and queue the block ids they touched. A single writer owns the
//! original tree: it re-accesses queued ids (evicting and remapping them),
//! applies block updates, and at each sync publishes a fresh snapshot.

mod config;

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

pub use config::{DeltaMode, DuplicatePolicy, StoreConfig};

use crate::chain::UpdateBatch;
use crate::crypto::KEY_LEN;
use crate::enclave::{OwnershipProof, OwnershipVerifier, Session};
use crate::oram::{Oram, OramError, OramParams, OramState, Strategy, TraceLog};
use crate::utxo::{
    oblock_map, oblock_map_multi, route_output, MapKey, OramBlockLayout, UtxoError, UtxoRecord, RECORD_LEN,
};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("ownership proof rejected")]
    BadProof,
    #[error("store unavailable, try again")]
    Unavailable,
    #[error("block {bid} already read this interval")]
    DuplicateRead { bid: u32 },
    #[error("eviction queue not empty")]
    QueueNotEmpty,
    #[error("wrong phase: {0:?}")]
    WrongPhase(Phase),
    #[error(transparent)]
    Oram(#[from] OramError),
    #[error(transparent)]
    Utxo(#[from] UtxoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Serving,
    Updating,
    Syncing,
}

#[derive(Clone, Debug)]
pub struct ReadRequest {
    pub proof: OwnershipProof,
    pub delta: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadResponse {
    pub interval: u64,
    /// Exactly `max_out` records; dummies have an all-zero txid.
    pub records: Vec<UtxoRecord>,
}

impl ReadResponse {
    pub fn real(&self) -> impl Iterator<Item = &UtxoRecord> {
        self.records.iter().filter(|r| !r.is_dummy())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateSummary {
    pub height: u32,
    pub creates: u64,
    pub spends: u64,
    /// Spends whose record was not in its block (untracked or unknown outputs).
    pub spends_missing: u64,
    pub block_full: u64,
    pub evictions: u64,
    pub interval: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub interval: u64,
    pub reads_served: u64,
    pub reads_since_sync: u64,
    pub evictions: u64,
    pub queue_len: usize,
    pub block_full: u64,
    pub reads_parked: u64,
    pub parked_now: usize,
}

/// Secrets the store works under.
#[derive(Clone, Debug)]
pub struct StoreKeys {
    pub oram_master: [u8; KEY_LEN],
    pub map_key: MapKey,
}

struct Snapshot {
    state: OramState,
    interval: u64,
}

struct PhaseState {
    phase: Phase,
    in_flight: usize,
    parked: usize,
}

#[derive(Default)]
struct EvictionQueue {
    pending: VecDeque<u32>,
    served_since_sync: u64,
    seen: HashSet<u32>,
}

pub struct Store {
    cfg: StoreConfig,
    layout: OramBlockLayout,
    map_key: MapKey,
    n: u32,
    verifier: OwnershipVerifier,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Oram>,
    phase: Mutex<PhaseState>,
    phase_cv: Condvar,
    queue: Mutex<EvictionQueue>,
    queue_cv: Condvar,
    read_trace: RwLock<Option<Arc<TraceLog>>>,
    reads_served: AtomicU64,
    evictions: AtomicU64,
    block_full: AtomicU64,
    reads_parked: AtomicU64,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("cfg", &self.cfg).field("n", &self.n).finish()
    }
}

/// ORAM parameters for a store of `n` blocks under `cfg`.
pub fn store_params(n: u32, strategy: Strategy, cfg: &StoreConfig) -> OramParams {
    OramParams::new(n, cfg.block_records * RECORD_LEN, strategy)
}

impl Store {
    /// Fresh store with an empty original tree and a matching snapshot.
    pub fn create(params: OramParams, keys: StoreKeys, cfg: StoreConfig, seed: u64) -> Result<Self, StoreError> {
        let oram = Oram::init(params, &keys.oram_master, seed)?;
        Self::from_parts(oram, None, 0, keys.map_key, cfg)
    }

    /// Rebuilds a store from an original ORAM and (optionally) a separate
    /// snapshot; without one the snapshot is a copy of the original.
    pub fn from_parts(
        original: Oram,
        snapshot: Option<OramState>,
        interval: u64,
        map_key: MapKey,
        cfg: StoreConfig,
    ) -> Result<Self, StoreError> {
        let params = *original.params();
        let layout = OramBlockLayout::for_payload(params.payload_bytes)?;
        if cfg.delta_max == 0 || cfg.max_out == 0 {
            return Err(OramError::InvalidParams("delta_max and max_out must be positive".into()).into());
        }
        let snap = snapshot.unwrap_or_else(|| original.snapshot());
        Ok(Store {
            cfg,
            layout,
            map_key,
            n: params.capacity_n,
            verifier: OwnershipVerifier::default(),
            snapshot: RwLock::new(Arc::new(Snapshot { state: snap, interval })),
            writer: Mutex::new(original),
            phase: Mutex::new(PhaseState { phase: Phase::Serving, in_flight: 0, parked: 0 }),
            phase_cv: Condvar::new(),
            queue: Mutex::new(EvictionQueue::default()),
            queue_cv: Condvar::new(),
            read_trace: RwLock::new(None),
            reads_served: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
            block_full: AtomicU64::new(0),
            reads_parked: AtomicU64::new(0),
        })
    }

    pub fn with_verifier(mut self, verifier: OwnershipVerifier) -> Self {
        self.verifier = verifier;
        self
    }

    pub fn config(&self) -> &StoreConfig {
        &self.cfg
    }

    pub fn layout(&self) -> OramBlockLayout {
        self.layout
    }

    pub fn params(&self) -> OramParams {
        *self.writer.lock().unwrap().params()
    }

    pub fn map_key(&self) -> &MapKey {
        &self.map_key
    }

    pub fn phase(&self) -> Phase {
        self.phase.lock().unwrap().phase
    }

    pub fn interval(&self) -> u64 {
        self.snapshot.read().unwrap().interval
    }

    /// Records every snapshot path read (for access-pattern analysis).
    pub fn set_read_trace(&self, trace: Option<Arc<TraceLog>>) {
        *self.read_trace.write().unwrap() = trace;
    }

    pub fn set_write_trace(&self, trace: Option<Arc<TraceLog>>) {
        self.writer.lock().unwrap().set_trace(trace);
    }

    pub fn stats(&self) -> StoreStats {
        let q = self.queue.lock().unwrap();
        StoreStats {
            interval: self.interval(),
            reads_served: self.reads_served.load(Ordering::Relaxed),
            reads_since_sync: q.served_since_sync,
            evictions: self.evictions.load(Ordering::Relaxed),
            queue_len: q.pending.len(),
            block_full: self.block_full.load(Ordering::Relaxed),
            reads_parked: self.reads_parked.load(Ordering::Relaxed),
            parked_now: self.phase.lock().unwrap().parked,
        }
    }

    // ---- mapping -------------------------------------------------------

    /// Block ids read for `pkh` with the given delta.
    pub fn bids_for(&self, pkh: &[u8; 20], delta: Option<u32>) -> Result<Vec<u32>, StoreError> {
        if self.cfg.delta_max == 1 {
            return match delta {
                None | Some(1) => Ok(vec![oblock_map(pkh, &self.map_key, self.n)]),
                Some(d) => Err(UtxoError::DeltaOutOfRange { delta: d, max: 1 }.into()),
            };
        }
        let delta = match self.cfg.delta_mode {
            DeltaMode::Fixed => self.cfg.delta_max,
            DeltaMode::ClientChosen => delta.unwrap_or(self.cfg.delta_max),
        };
        Ok(oblock_map_multi(pkh, &self.map_key, delta, self.cfg.delta_max, self.n)?)
    }

    /// Block holding a given output.
    pub fn bid_for_output(&self, pkh: &[u8; 20], txid: &[u8; 32], vout: u32) -> u32 {
        if self.cfg.delta_max == 1 {
            return oblock_map(pkh, &self.map_key, self.n);
        }
        let bids = oblock_map_multi(pkh, &self.map_key, self.cfg.delta_max, self.cfg.delta_max, self.n)
            .expect("delta_max is in range");
        bids[route_output(pkh, txid, vout, &self.map_key, self.cfg.delta_max) as usize]
    }

    // ---- reading -------------------------------------------------------

    /// Verifies the ownership proof, then answers from the snapshot.
    pub fn serve_read(&self, req: &ReadRequest, session: &Session) -> Result<ReadResponse, StoreError> {
        let pkh = req.proof.pkh;
        if !self.verifier.verify_ownership(&req.proof, &pkh, session) {
            return Err(StoreError::BadProof);
        }
        self.read_records(&pkh, req.delta)
    }

    /// The read path without the ownership check.
    pub fn read_records(&self, pkh: &[u8; 20], delta: Option<u32>) -> Result<ReadResponse, StoreError> {
        let bids = self.bids_for(pkh, delta)?;
        self.enter_read()?;
        let res = self.read_inner(pkh, &bids);
        self.leave_read();
        res
    }

    /// Raw `read_once` of one block on the snapshot, queued like any read.
    pub fn read_block_once(&self, bid: u32) -> Result<Box<[u8]>, StoreError> {
        self.enter_read()?;
        let res = (|| -> Result<Box<[u8]>, StoreError> {
            let snap = self.snapshot.read().unwrap().clone();
            self.claim(&[bid])?;
            let trace = self.read_trace.read().unwrap().clone();
            let payload = snap.state.read_once(bid, trace.as_deref())?;
            self.enqueue(&[bid]);
            Ok(payload)
        })();
        self.leave_read();
        res
    }

    fn read_inner(&self, pkh: &[u8; 20], bids: &[u32]) -> Result<ReadResponse, StoreError> {
        let snap = self.snapshot.read().unwrap().clone();
        self.claim(bids)?;
        let trace = self.read_trace.read().unwrap().clone();
        let mut payloads = Vec::with_capacity(bids.len());
        for &bid in bids {
            payloads.push(snap.state.read_once(bid, trace.as_deref())?);
        }
        self.enqueue(bids);
        let refs: Vec<&[u8]> = payloads.iter().map(|p| &p[..]).collect();
        let records = self.layout.extract(&refs, pkh, self.cfg.max_out)?;
        self.reads_served.fetch_add(1, Ordering::Relaxed);
        Ok(ReadResponse { interval: snap.interval, records })
    }

    fn claim(&self, bids: &[u32]) -> Result<(), StoreError> {
        if self.cfg.duplicate_policy == DuplicatePolicy::Strict {
            let mut q = self.queue.lock().unwrap();
            if let Some(&bid) = bids.iter().find(|b| q.seen.contains(b)) {
                return Err(StoreError::DuplicateRead { bid });
            }
            q.seen.extend(bids.iter().copied());
        }
        Ok(())
    }

    fn enqueue(&self, bids: &[u32]) {
        let mut q = self.queue.lock().unwrap();
        q.pending.extend(bids.iter().copied());
        q.served_since_sync += bids.len() as u64;
        drop(q);
        self.queue_cv.notify_all();
    }

    fn enter_read(&self) -> Result<(), StoreError> {
        let mut p = self.phase.lock().unwrap();
        if p.phase == Phase::Syncing {
            if p.parked >= self.cfg.park_limit {
                return Err(StoreError::Unavailable);
            }
            p.parked += 1;
            self.reads_parked.fetch_add(1, Ordering::Relaxed);
            self.phase_cv.notify_all();
            p = self.phase_cv.wait_while(p, |p| p.phase == Phase::Syncing).unwrap();
            p.parked -= 1;
        }
        p.in_flight += 1;
        Ok(())
    }

    fn leave_read(&self) {
        let mut p = self.phase.lock().unwrap();
        p.in_flight -= 1;
        drop(p);
        self.phase_cv.notify_all();
    }

    /// Blocks until at least `n` reads are parked (test and demo hook).
    pub fn wait_parked(&self, n: usize, timeout: Duration) -> bool {
        let p = self.phase.lock().unwrap();
        let (_p, res) = self.phase_cv.wait_timeout_while(p, timeout, |p| p.parked < n).unwrap();
        !res.timed_out()
    }

    // ---- writing -------------------------------------------------------

    /// Re-accesses every queued id on the original tree: data unchanged,
    /// leaf remapped, path evicted.
    pub fn drain_evictions(&self) -> Result<u64, StoreError> {
        let mut oram = self.writer.lock().unwrap();
        let mut done = 0;
        loop {
            let Some(bid) = self.queue.lock().unwrap().pending.pop_front() else {
                break;
            };
            oram.read(bid)?;
            done += 1;
        }
        self.evictions.fetch_add(done, Ordering::Relaxed);
        Ok(done)
    }

    /// Applies a batch to the original tree while reads continue on the
    /// snapshot. Creates go first so outputs spent in the same block resolve.
    pub fn apply_updates(&self, batch: &UpdateBatch) -> Result<UpdateSummary, StoreError> {
        self.set_phase(Phase::Updating);
        let res = self.apply_inner(batch);
        if res.is_err() {
            self.set_phase(Phase::Serving);
        }
        res
    }

    fn apply_inner(&self, batch: &UpdateBatch) -> Result<UpdateSummary, StoreError> {
        let mut s = UpdateSummary { height: batch.height, ..Default::default() };
        let mut oram = self.writer.lock().unwrap();
        let layout = self.layout;
        for rec in &batch.creates {
            let bid = self.bid_for_output(&rec.pkh, &rec.txid, rec.vout);
            let mut res = Ok(());
            oram.access_with(bid, |p| res = layout.insert(p, rec))?;
            match res {
                Ok(()) => s.creates += 1,
                Err(UtxoError::BlockFull { capacity }) => {
                    log::warn!("block {bid} full ({capacity} records); dropped output at height {}", batch.height);
                    s.block_full += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        for sp in &batch.spends {
            let bid = self.bid_for_output(&sp.pkh, &sp.txid, sp.vout);
            let mut res = Ok(None);
            oram.access_with(bid, |p| res = layout.remove(p, &sp.txid, sp.vout))?;
            match res? {
                Some(_) => s.spends += 1,
                None => s.spends_missing += 1,
            }
        }
        self.block_full.fetch_add(s.block_full, Ordering::Relaxed);
        Ok(s)
    }

    /// Updating → Syncing: new reads park, in-flight reads finish.
    pub fn begin_sync(&self) {
        let mut p = self.phase.lock().unwrap();
        p.phase = Phase::Syncing;
        let _p = self.phase_cv.wait_while(p, |p| p.in_flight > 0).unwrap();
    }

    /// Drains the queue, publishes the original as the new snapshot and
    /// resumes serving. Returns the new interval id.
    pub fn finish_sync(&self) -> Result<u64, StoreError> {
        self.finish_sync_at(None)
    }

    /// Like `sync`, but publishes the snapshot under a chosen interval id
    /// (not below the current one).
    pub fn sync_to(&self, interval: u64) -> Result<u64, StoreError> {
        self.begin_sync();
        self.finish_sync_at(Some(interval))
    }

    fn finish_sync_at(&self, target: Option<u64>) -> Result<u64, StoreError> {
        if self.phase() != Phase::Syncing {
            return Err(StoreError::WrongPhase(self.phase()));
        }
        self.drain_evictions()?;
        let oram = self.writer.lock().unwrap();
        let interval = {
            let mut q = self.queue.lock().unwrap();
            if !q.pending.is_empty() {
                return Err(StoreError::QueueNotEmpty);
            }
            q.served_since_sync = 0;
            q.seen.clear();
            let mut snap = self.snapshot.write().unwrap();
            let interval = target.unwrap_or(snap.interval + 1).max(snap.interval);
            *snap = Arc::new(Snapshot { state: oram.snapshot(), interval });
            interval
        };
        drop(oram);
        self.set_phase(Phase::Serving);
        Ok(interval)
    }

    pub fn sync(&self) -> Result<u64, StoreError> {
        self.begin_sync();
        self.finish_sync()
    }

    /// apply_updates then sync.
    pub fn apply_block(&self, batch: &UpdateBatch) -> Result<UpdateSummary, StoreError> {
        let mut s = self.apply_updates(batch)?;
        let before = self.evictions.load(Ordering::Relaxed);
        s.interval = self.sync()?;
        s.evictions = self.evictions.load(Ordering::Relaxed) - before;
        Ok(s)
    }

    fn set_phase(&self, phase: Phase) {
        self.phase.lock().unwrap().phase = phase;
        self.phase_cv.notify_all();
    }

    // ---- inspection ----------------------------------------------------

    /// Standard access on the original tree (remaps the block).
    pub fn original_read(&self, bid: u32) -> Result<Box<[u8]>, StoreError> {
        Ok(self.writer.lock().unwrap().read(bid)?)
    }

    /// Runs `f` over the current snapshot state.
    pub fn with_snapshot<T>(&self, f: impl FnOnce(&OramState, u64) -> T) -> T {
        let snap = self.snapshot.read().unwrap().clone();
        f(&snap.state, snap.interval)
    }

    pub fn with_original<T>(&self, f: impl FnOnce(&Oram) -> T) -> T {
        f(&self.writer.lock().unwrap())
    }

    /// Untrusted-host access to the snapshot's storage, for fault injection.
    pub fn host_mut_snapshot(&self, f: impl FnOnce(&mut OramState)) {
        let mut guard = self.snapshot.write().unwrap();
        let mut state = guard.state.clone();
        f(&mut state);
        *guard = Arc::new(Snapshot { state, interval: guard.interval });
    }

    /// Untrusted-host access to the original tree's storage.
    pub fn host_mut_original(&self, f: impl FnOnce(&mut OramState)) {
        f(self.writer.lock().unwrap().state_mut());
    }

    /// Spawns the background evictor that drains the queue as reads arrive.
    pub fn spawn_evictor(self: &Arc<Self>) -> Evictor {
        let stop = Arc::new(AtomicBool::new(false));
        let store = Arc::clone(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name("t3-evictor".into())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    {
                        let q = store.queue.lock().unwrap();
                        let _q = store
                            .queue_cv
                            .wait_timeout_while(q, Duration::from_millis(50), |q| q.pending.is_empty())
                            .unwrap();
                    }
                    if let Err(e) = store.drain_evictions() {
                        log::error!("eviction failed: {e}");
                    }
                }
            })
            .expect("spawn evictor");
        Evictor { stop, handle: Some(handle) }
    }
}

/// Background eviction thread; stops on drop.
pub struct Evictor {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Evictor {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
