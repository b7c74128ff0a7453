//! Plaintext reference stores. These share only type definitions with the
//! code they check: the UTXO oracle parses raw block bytes and hashes with
//! `sha2`/`ripemd` directly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ripemd::Ripemd160;
use sha2::{Digest, Sha256};

use crate::utxo::UtxoRecord;

/// bid → payload, zero-filled until written.
#[derive(Clone, Debug)]
pub struct KvOracle {
    payload_bytes: usize,
    map: HashMap<u32, Vec<u8>>,
}

impl KvOracle {
    pub fn new(payload_bytes: usize) -> Self {
        KvOracle { payload_bytes, map: HashMap::new() }
    }

    pub fn read(&self, bid: u32) -> Vec<u8> {
        self.map.get(&bid).cloned().unwrap_or_else(|| vec![0; self.payload_bytes])
    }

    /// Returns the previous value, like an ORAM write.
    pub fn write(&mut self, bid: u32, data: &[u8]) -> Vec<u8> {
        let mut v = data.to_vec();
        v.resize(self.payload_bytes, 0);
        self.map.insert(bid, v).unwrap_or_else(|| vec![0; self.payload_bytes])
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("oracle parse error at byte {0}")]
pub struct ParseError(pub usize);

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len()).ok_or(ParseError(self.pos))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ParseError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64, ParseError> {
        let first = self.take(1)?[0];
        Ok(match first {
            0xfd => u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as u64,
            0xfe => self.u32()? as u64,
            0xff => self.u64()?,
            n => n as u64,
        })
    }

    fn var_bytes(&mut self) -> Result<&'a [u8], ParseError> {
        let n = self.varint()?;
        self.take(usize::try_from(n).map_err(|_| ParseError(self.pos))?)
    }
}

fn dsha(data: &[u8]) -> [u8; 32] {
    Sha256::digest(Sha256::digest(data)).into()
}

fn h160(data: &[u8]) -> [u8; 20] {
    Ripemd160::digest(Sha256::digest(data)).into()
}

/// One parsed transaction: txid, inputs as (prev txid, prev vout, scriptSig), outputs as (value, script).
type RawTx<'a> = ([u8; 32], Vec<([u8; 32], u32, &'a [u8])>, Vec<(u64, &'a [u8])>);

fn parse_tx<'a>(c: &mut Cursor<'a>) -> Result<RawTx<'a>, ParseError> {
    let start = c.pos;
    c.take(4)?;
    let segwit = c.b.get(c.pos) == Some(&0) && c.b.get(c.pos + 1) == Some(&1);
    if segwit {
        c.take(2)?;
    }
    let body_start = c.pos;
    let mut inputs = Vec::new();
    for _ in 0..c.varint()? {
        let txid: [u8; 32] = c.take(32)?.try_into().unwrap();
        let vout = c.u32()?;
        let script = c.var_bytes()?;
        c.take(4)?;
        inputs.push((txid, vout, script));
    }
    let mut outputs = Vec::new();
    for _ in 0..c.varint()? {
        let value = c.u64()?;
        outputs.push((value, c.var_bytes()?));
    }
    let body_end = c.pos;
    if segwit {
        for _ in 0..inputs.len() {
            for _ in 0..c.varint()? {
                c.var_bytes()?;
            }
        }
    }
    c.take(4)?;
    let txid = if segwit {
        let mut legacy = c.b[start..start + 4].to_vec();
        legacy.extend_from_slice(&c.b[body_start..body_end]);
        legacy.extend_from_slice(&c.b[c.pos - 4..c.pos]);
        dsha(&legacy)
    } else {
        dsha(&c.b[start..c.pos])
    };
    Ok((txid, inputs, outputs))
}

fn output_pkh(script: &[u8]) -> Option<[u8; 20]> {
    if script.len() == 25 && script[..3] == [0x76, 0xa9, 0x14] && script[23..] == [0x88, 0xac] {
        return Some(script[3..23].try_into().unwrap());
    }
    if script.len() == 23 && script[..2] == [0xa9, 0x14] && script[22] == 0x87 {
        return Some(script[2..22].try_into().unwrap());
    }
    None
}

/// Ledger replay by outpoint: the true unspent set after each block.
#[derive(Clone, Debug, Default)]
pub struct UtxoOracle {
    live: BTreeMap<([u8; 32], u32), UtxoRecord>,
    pub blocks: u32,
    /// Inputs whose outpoint was not in the set (outputs the store does not track).
    pub untracked_spends: u64,
}

impl UtxoOracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one serialized block (80-byte header, then transactions).
    pub fn apply_raw(&mut self, raw: &[u8]) -> Result<(), ParseError> {
        let height = self.blocks;
        let mut c = Cursor { b: raw, pos: 80 };
        if raw.len() < 80 {
            return Err(ParseError(0));
        }
        let n = c.varint()?;
        for i in 0..n {
            let (txid, inputs, outputs) = parse_tx(&mut c)?;
            for (vout, (value, script)) in outputs.iter().enumerate() {
                if let Some(pkh) = output_pkh(script) {
                    let rec = UtxoRecord { txid, vout: vout as u32, amount: *value, height, pkh };
                    self.live.insert((txid, vout as u32), rec);
                }
            }
            if i > 0 {
                for (prev, vout, _) in inputs {
                    if self.live.remove(&(prev, vout)).is_none() {
                        self.untracked_spends += 1;
                    }
                }
            }
        }
        if c.pos != raw.len() {
            return Err(ParseError(c.pos));
        }
        self.blocks += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn records_for(&self, pkh: &[u8; 20]) -> BTreeSet<UtxoRecord> {
        self.live.values().filter(|r| &r.pkh == pkh).copied().collect()
    }

    pub fn by_pkh(&self) -> BTreeMap<[u8; 20], BTreeSet<UtxoRecord>> {
        let mut m: BTreeMap<[u8; 20], BTreeSet<UtxoRecord>> = BTreeMap::new();
        for r in self.live.values() {
            m.entry(r.pkh).or_default().insert(*r);
        }
        m
    }
}

/// hash160 of a key or redeem script, computed independently.
pub fn oracle_hash160(data: &[u8]) -> [u8; 20] {
    h160(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{GenConfig, GeneratedChain};

    #[test]
    fn kv_defaults_and_overwrites() {
        let mut kv = KvOracle::new(4);
        assert_eq!(kv.read(3), vec![0; 4]);
        assert_eq!(kv.write(3, &[1, 2]), vec![0; 4]);
        assert_eq!(kv.write(3, &[5, 5, 5, 5]), vec![1, 2, 0, 0]);
        assert_eq!(kv.read(3), vec![5; 4]);
    }

    #[test]
    fn replay_matches_generator_truth() {
        let cfg = GenConfig { blocks: 15, txs_per_block: 6, live_outputs: 120, spent_outputs: 60, ..Default::default() };
        let g = GeneratedChain::generate(&cfg).unwrap();
        let mut o = UtxoOracle::new();
        for b in &g.blocks {
            o.apply_raw(&b.encode()).unwrap();
        }
        assert_eq!(o.by_pkh(), g.truth);
        assert_eq!(o.untracked_spends, 0);
    }

    #[test]
    fn truncated_block_is_rejected() {
        let g = GeneratedChain::generate(&GenConfig { blocks: 2, txs_per_block: 2, live_outputs: 4, spent_outputs: 1, ..Default::default() }).unwrap();
        let raw = g.blocks[1].encode();
        assert!(UtxoOracle::new().apply_raw(&raw[..raw.len() - 1]).is_err());
    }
}
