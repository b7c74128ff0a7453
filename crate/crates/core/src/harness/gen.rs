//! Deterministic synthetic chains with known UTXO contents.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use k256::ecdsa::SigningKey;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::chain::{mine, Block, BlockHeader, ChainError, DirBlockSource, OutPoint, Transaction, TxIn, TxOut};
use crate::crypto::{hash160, Hash32};
use crate::enclave::ownership::compressed_pubkey;
use crate::utxo::UtxoRecord;

/// Regtest-style target: about two hashes per block.
pub const EASY_BITS: u32 = 0x207f_ffff;

/// Histogram over addresses of how many live UTXOs each ends with. The last
/// bucket is open-ended: counts at or above its value are drawn with a
/// geometric tail.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub buckets: Vec<(u32, f64)>,
    /// Probability of each step past the open bucket's value.
    pub tail_continue: f64,
    pub max_count: u32,
}

impl Default for Distribution {
    /// 70% of addresses hold one output, 22% two, 8% three or more.
    fn default() -> Self {
        Distribution { buckets: vec![(1, 0.70), (2, 0.22), (3, 0.08)], tail_continue: 0.15, max_count: 6 }
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<(), GenError> {
        let total: f64 = self.buckets.iter().map(|b| b.1).sum();
        if self.buckets.is_empty()
            || self.buckets.iter().any(|&(c, w)| c == 0 || !(0.0..=1.0).contains(&w))
            || (total - 1.0).abs() > 1e-6
            || !(0.0..1.0).contains(&self.tail_continue)
            || self.buckets.windows(2).any(|w| w[0].0 >= w[1].0)
            || self.buckets.last().unwrap().0 > self.max_count
        {
            return Err(GenError::Infeasible("distribution must be increasing positive counts with weights summing to 1"));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let mut x: f64 = rng.gen();
        for (i, &(count, w)) in self.buckets.iter().enumerate() {
            if x < w || i + 1 == self.buckets.len() {
                if i + 1 < self.buckets.len() {
                    return count;
                }
                let mut c = count;
                while c < self.max_count && rng.gen_bool(self.tail_continue) {
                    c += 1;
                }
                return c;
            }
            x -= w;
        }
        unreachable!()
    }

    /// Parses `1:0.7,2:0.22,3:0.08`.
    pub fn parse(s: &str) -> Result<Self, GenError> {
        let mut buckets = Vec::new();
        for part in s.split(',') {
            let (c, w) = part.split_once(':').ok_or(GenError::Infeasible("expected count:weight pairs"))?;
            let c: u32 = c.trim().trim_end_matches('+').parse().map_err(|_| GenError::Infeasible("bad count"))?;
            let w: f64 = w.trim().parse().map_err(|_| GenError::Infeasible("bad weight"))?;
            buckets.push((c, w));
        }
        let d = Distribution { buckets, ..Default::default() };
        let d = Distribution { max_count: d.max_count.max(d.buckets.last().map_or(0, |b| b.0)), ..d };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub blocks: u32,
    /// Including the coinbase.
    pub txs_per_block: u32,
    pub distribution: Distribution,
    /// Live outputs the chain should end with (approximately).
    pub live_outputs: u32,
    /// Outputs created and later spent.
    pub spent_outputs: u32,
    /// Share of spent outputs that go to addresses that end with nothing.
    pub zero_address_share: f64,
    pub p2sh_share: f64,
    pub bits: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            blocks: 200,
            txs_per_block: 11,
            distribution: Distribution::default(),
            live_outputs: 3000,
            spent_outputs: 2000,
            zero_address_share: 0.1,
            p2sh_share: 0.1,
            bits: EASY_BITS,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("infeasible: {0}")]
    Infeasible(&'static str),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Utxo(#[from] crate::utxo::UtxoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddressKind {
    P2pkh,
    /// Pay-to-script-hash of a 1-of-1 multisig over the key.
    P2sh,
}

#[derive(Clone)]
pub struct Address {
    pub kind: AddressKind,
    pub secret: [u8; 32],
    /// What hashes to `pkh`: the compressed pubkey, or the redeem script.
    pub preimage: Vec<u8>,
    pub pkh: [u8; 20],
}

impl std::fmt::Debug for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Address").field("kind", &self.kind).field("pkh", &hex::encode(self.pkh)).finish()
    }
}

impl Address {
    fn generate<R: Rng>(rng: &mut R, kind: AddressKind) -> Self {
        loop {
            let secret: [u8; 32] = rng.gen();
            let Ok(sk) = SigningKey::from_slice(&secret) else { continue };
            let pubkey = compressed_pubkey(&sk);
            let preimage = match kind {
                AddressKind::P2pkh => pubkey,
                AddressKind::P2sh => [&[0x51, 0x21][..], &pubkey, &[0x51, 0xae]].concat(),
            };
            return Address { kind, secret, pkh: hash160(&preimage), preimage };
        }
    }

    pub fn script_pubkey(&self) -> Vec<u8> {
        match self.kind {
            AddressKind::P2pkh => [&[0x76, 0xa9, 0x14][..], &self.pkh, &[0x88, 0xac]].concat(),
            AddressKind::P2sh => [&[0xa9, 0x14][..], &self.pkh, &[0x87]].concat(),
        }
    }

    /// scriptSig with placeholder signature bytes; scripts are not executed.
    fn script_sig<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        let mut sig = vec![0x30u8; 71];
        rng.fill(&mut sig[1..]);
        let mut s = Vec::new();
        if self.kind == AddressKind::P2sh {
            s.push(0x00);
        }
        s.push(sig.len() as u8);
        s.extend_from_slice(&sig);
        s.push(self.preimage.len() as u8);
        s.extend_from_slice(&self.preimage);
        s
    }

    /// Keyfile line: `hex preimage[,hex privkey]` (private key for P2PKH only).
    pub fn keyfile_line(&self) -> String {
        match self.kind {
            AddressKind::P2pkh => format!("{},{}", hex::encode(&self.preimage), hex::encode(self.secret)),
            AddressKind::P2sh => hex::encode(&self.preimage),
        }
    }
}

/// A generated chain with the generator's own record of what is unspent.
#[derive(Clone, Debug)]
pub struct GeneratedChain {
    pub config: GenConfig,
    pub blocks: Vec<Block>,
    pub addresses: Vec<Address>,
    /// Live UTXOs per pkh, from the generator's bookkeeping.
    pub truth: BTreeMap<[u8; 20], BTreeSet<UtxoRecord>>,
    pub outputs_created: u64,
    pub spends: u64,
    pub noise_outputs: u64,
}

struct Event {
    addr: usize,
    spend: bool,
}

impl GeneratedChain {
    pub fn generate(cfg: &GenConfig) -> Result<Self, GenError> {
        cfg.distribution.validate()?;
        if cfg.blocks == 0 || cfg.txs_per_block == 0 {
            return Err(GenError::Infeasible("need at least one block and one tx per block"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut addresses = Vec::new();
        let mut events = Vec::new();
        let new_addr = |rng: &mut ChaCha20Rng, addresses: &mut Vec<Address>| {
            let kind = if rng.gen_bool(cfg.p2sh_share) { AddressKind::P2sh } else { AddressKind::P2pkh };
            addresses.push(Address::generate(rng, kind));
            addresses.len() - 1
        };

        let mut live = 0;
        while live < cfg.live_outputs {
            let k = cfg.distribution.sample(&mut rng);
            let a = new_addr(&mut rng, &mut addresses);
            for _ in 0..k {
                events.push(Event { addr: a, spend: false });
            }
            live += k;
        }
        let holders = addresses.len();
        let mut spent = 0;
        while spent < cfg.spent_outputs {
            if rng.gen_bool(cfg.zero_address_share) {
                let a = new_addr(&mut rng, &mut addresses);
                for _ in 0..rng.gen_range(1..=2u32).min(cfg.spent_outputs - spent) {
                    events.push(Event { addr: a, spend: true });
                    spent += 1;
                }
            } else {
                events.push(Event { addr: rng.gen_range(0..holders), spend: true });
                spent += 1;
            }
        }
        // Spent outputs go early so they can be spent inside the chain.
        events.shuffle(&mut rng);
        let mut keyed: Vec<(bool, Event)> = events.into_iter().map(|e| (!e.spend && rng.gen_bool(0.7), e)).collect();
        keyed.sort_by_key(|k| k.0);
        let mut events: VecDeque<Event> = keyed.into_iter().map(|k| k.1).collect();

        let mut blocks: Vec<Block> = Vec::new();
        let mut truth: BTreeMap<[u8; 20], BTreeSet<UtxoRecord>> = BTreeMap::new();
        let mut spendable: Vec<(OutPoint, usize, UtxoRecord)> = Vec::new();
        let (mut outputs_created, mut spends, mut noise) = (0u64, 0u64, 0u64);
        let mut prev_hash = [0u8; 32];

        for height in 0..cfg.blocks {
            let remaining_blocks = (cfg.blocks - height) as usize;
            let quota = events.len().div_ceil(remaining_blocks);
            let last = remaining_blocks == 1;
            let regular = if last { 0 } else { ((cfg.txs_per_block - 1) as usize).min(spendable.len()).min(quota) };
            let mut this_block: Vec<Event> = Vec::new();
            let take = if last { events.len() } else { quota.max(regular) };
            for _ in 0..take.min(events.len()) {
                this_block.push(events.pop_front().unwrap());
            }

            let mut txs = Vec::new();
            // Coinbase: a BIP34-style height push keeps txids unique.
            let cb_outs = if regular == 0 { this_block.len() } else { this_block.len().min(3) };
            let cb_events: Vec<Event> = this_block.drain(..cb_outs).collect();
            let mut cb = Transaction {
                version: 1,
                inputs: vec![TxIn {
                    prevout: OutPoint::NULL,
                    script_sig: [&[0x04][..], &height.to_le_bytes(), &[0x01, 0x00]].concat(),
                    sequence: u32::MAX,
                    witness: vec![],
                }],
                outputs: Vec::new(),
                lock_time: 0,
            };
            let mut pending: Vec<(Transaction, Vec<Event>)> = Vec::new();
            for e in &cb_events {
                cb.outputs.push(TxOut { value: rng.gen_range(1_000..5_000_000_000), script_pubkey: addresses[e.addr].script_pubkey() });
            }
            if cb.outputs.is_empty() {
                cb.outputs.push(TxOut { value: 0, script_pubkey: vec![0x6a] });
                noise += 1;
            }
            pending.push((cb, cb_events));

            // Regular txs: each spends one earlier output and pays 1+ events.
            let mut spendable_now = std::mem::take(&mut spendable);
            spendable_now.shuffle(&mut rng);
            let per_tx = this_block.len().checked_div(regular).unwrap_or(0);
            for i in 0..regular {
                let (op, owner, rec) = spendable_now.pop().unwrap();
                let n = if i + 1 == regular { this_block.len() } else { per_tx.max(1).min(this_block.len()) };
                let evs: Vec<Event> = this_block.drain(..n).collect();
                let mut tx = Transaction {
                    version: 2,
                    inputs: vec![TxIn { prevout: op, script_sig: addresses[owner].script_sig(&mut rng), sequence: u32::MAX, witness: vec![] }],
                    outputs: Vec::new(),
                    lock_time: 0,
                };
                for e in &evs {
                    tx.outputs.push(TxOut { value: rng.gen_range(1_000..1_000_000_000), script_pubkey: addresses[e.addr].script_pubkey() });
                }
                if rng.gen_bool(0.1) {
                    tx.outputs.push(TxOut { value: 0, script_pubkey: vec![0x6a, 0x04, 0xde, 0xad, 0xbe, 0xef] });
                    noise += 1;
                }
                if rng.gen_bool(0.05) {
                    let mut w = vec![0x00, 0x14];
                    w.extend_from_slice(&rng.gen::<[u8; 20]>());
                    tx.outputs.push(TxOut { value: 5_000, script_pubkey: w });
                    noise += 1;
                }
                if tx.outputs.is_empty() {
                    tx.outputs.push(TxOut { value: 0, script_pubkey: vec![0x6a] });
                    noise += 1;
                }
                truth.get_mut(&rec.pkh).map(|s| s.remove(&rec));
                spends += 1;
                pending.push((tx, evs));
            }
            spendable = spendable_now;

            let mut block_spendable = Vec::new();
            for (tx, evs) in &pending {
                let txid = tx.txid();
                for (vout, out) in tx.outputs.iter().enumerate() {
                    let Some(e) = evs.get(vout) else { break };
                    let a = &addresses[e.addr];
                    let rec = UtxoRecord::new(txid, vout as u32, out.value, height, a.pkh)?;
                    truth.entry(a.pkh).or_default().insert(rec);
                    outputs_created += 1;
                    if e.spend {
                        block_spendable.push((OutPoint { txid, vout: vout as u32 }, e.addr, rec));
                    }
                }
            }
            spendable.extend(block_spendable);
            let txs_vec: Vec<Transaction> = pending.into_iter().map(|(t, _)| t).collect();
            txs.extend(txs_vec);

            let merkle_root = crate::chain::merkle_root(&txs.iter().map(Transaction::txid).collect::<Vec<Hash32>>())?;
            let tpl = BlockHeader {
                version: 0x2000_0000,
                prev_hash,
                merkle_root,
                time: 1_600_000_000 + 600 * height,
                bits: cfg.bits,
                nonce: 0,
            };
            let (header, _) = mine(tpl, cfg.bits, u64::from(u32::MAX) * 4)?;
            prev_hash = header.hash();
            blocks.push(Block { header, txs });
        }
        truth.retain(|_, s| !s.is_empty());
        Ok(GeneratedChain {
            config: cfg.clone(),
            blocks,
            addresses,
            truth,
            outputs_created,
            spends,
            noise_outputs: noise,
        })
    }

    pub fn live_utxos(&self) -> usize {
        self.truth.values().map(BTreeSet::len).sum()
    }

    /// Share of live UTXOs an answer of at most `max_out` records per address covers.
    pub fn coverage(&self, max_out: usize) -> f64 {
        let total = self.live_utxos();
        if total == 0 {
            return 1.0;
        }
        let covered: usize = self.truth.values().map(|s| s.len().min(max_out)).sum();
        covered as f64 / total as f64
    }

    /// Address histogram over live UTXO counts (count → addresses).
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for s in self.truth.values() {
            *h.entry(s.len()).or_insert(0) += 1;
        }
        h
    }

    /// Addresses that received outputs but hold nothing at the tip.
    pub fn emptied_addresses(&self) -> Vec<[u8; 20]> {
        self.addresses.iter().map(|a| a.pkh).filter(|p| !self.truth.contains_key(p)).collect()
    }

    pub fn address(&self, pkh: &[u8; 20]) -> Option<&Address> {
        self.addresses.iter().find(|a| &a.pkh == pkh)
    }

    /// Writes `<h>.hex` blocks, `keys.txt`, and `truth.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), GenError> {
        let src = DirBlockSource::new(dir);
        for (h, b) in self.blocks.iter().enumerate() {
            src.put(h as u32, b)?;
        }
        let keys: Vec<String> = self.addresses.iter().map(Address::keyfile_line).collect();
        std::fs::write(dir.join("keys.txt"), keys.join("\n") + "\n")?;
        let mut csv = String::from("pkh,txid,vout,amount,height\n");
        for (pkh, recs) in &self.truth {
            for r in recs {
                csv.push_str(&format!("{},{},{},{},{}\n", hex::encode(pkh), r.txid_display(), r.vout, r.amount, r.height));
            }
        }
        std::fs::write(dir.join("truth.csv"), csv)?;
        Ok(())
    }
}
