//! Reduces a verified block to the UTXO changes the ORAM needs.

use super::block::Block;
use super::ChainError;
use crate::crypto::{hash160_with, Hash160Mode, Hash32};
use crate::utxo::UtxoRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    P2pkh([u8; 20]),
    P2sh([u8; 20]),
    NullData,
    NonStandard,
}

impl OutputKind {
    pub fn pkh(&self) -> Option<[u8; 20]> {
        match self {
            OutputKind::P2pkh(h) | OutputKind::P2sh(h) => Some(*h),
            _ => None,
        }
    }
}

pub fn classify_output(script: &[u8]) -> OutputKind {
    match script {
        [0x76, 0xa9, 0x14, h @ .., 0x88, 0xac] if h.len() == 20 => OutputKind::P2pkh(h.try_into().unwrap()),
        [0xa9, 0x14, h @ .., 0x87] if h.len() == 20 => OutputKind::P2sh(h.try_into().unwrap()),
        [0x6a, ..] => OutputKind::NullData,
        _ => OutputKind::NonStandard,
    }
}

/// Data of the final push opcode in a script, or `None` if the script has no
/// pushes or is truncated.
pub fn last_push(script: &[u8]) -> Option<&[u8]> {
    let mut i = 0;
    let mut last = None;
    while i < script.len() {
        let op = script[i];
        i += 1;
        let len = match op {
            0x00 => 0,
            0x01..=0x4b => op as usize,
            0x4c => {
                let n = *script.get(i)? as usize;
                i += 1;
                n
            }
            0x4d => {
                let n = u16::from_le_bytes(script.get(i..i + 2)?.try_into().unwrap()) as usize;
                i += 2;
                n
            }
            0x4e => {
                let n = u32::from_le_bytes(script.get(i..i + 4)?.try_into().unwrap()) as usize;
                i += 4;
                n
            }
            _ => continue,
        };
        last = Some(script.get(i..i.checked_add(len)?)?);
        i += len;
    }
    last
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Spend {
    pub pkh: [u8; 20],
    pub txid: Hash32,
    pub vout: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateBatch {
    pub height: u32,
    pub block_hash: Hash32,
    pub spends: Vec<Spend>,
    pub creates: Vec<UtxoRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub nulldata: u64,
    pub nonstandard: u64,
    /// Non-coinbase inputs whose scriptSig has no push to hash (e.g. native segwit).
    pub unresolved_spends: u64,
}

/// Extracts P2PKH/P2SH outputs as creates and keyed inputs as spends. Apply
/// creates before spends so intra-block chains resolve.
pub fn prune(block: &Block, height: u32, hash_mode: Hash160Mode) -> Result<(UpdateBatch, PruneStats), ChainError> {
    let mut batch = UpdateBatch { height, block_hash: block.header.hash(), ..Default::default() };
    let mut stats = PruneStats::default();
    for tx in &block.txs {
        let txid = tx.txid();
        for (vout, out) in tx.outputs.iter().enumerate() {
            match classify_output(&out.script_pubkey) {
                OutputKind::NullData => stats.nulldata += 1,
                OutputKind::NonStandard => stats.nonstandard += 1,
                kind => {
                    let pkh = kind.pkh().unwrap();
                    batch.creates.push(UtxoRecord::new(txid, vout as u32, out.value, height, pkh)?);
                }
            }
        }
        if tx.is_coinbase() {
            continue;
        }
        for input in &tx.inputs {
            match last_push(&input.script_sig) {
                Some(data) if !data.is_empty() => batch.spends.push(Spend {
                    pkh: hash160_with(hash_mode, data),
                    txid: input.prevout.txid,
                    vout: input.prevout.vout,
                }),
                _ => stats.unresolved_spends += 1,
            }
        }
    }
    Ok((batch, stats))
}
