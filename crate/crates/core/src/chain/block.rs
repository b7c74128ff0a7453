use super::header::BlockHeader;
use super::tx::Transaction;
use super::wire::{put_varint, Reader};
use super::{bad, ChainError};
use crate::crypto::{sha256d, Hash32};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

/// Bitcoin Merkle root: pairwise double-SHA256, duplicating the last hash
/// of an odd level. A single txid is its own root.
pub fn merkle_root(txids: &[Hash32]) -> Result<Hash32, ChainError> {
    if txids.is_empty() {
        return Err(ChainError::EmptyTxList);
    }
    let mut level = txids.to_vec();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks_exact(2)
            .map(|p| sha256d(&[&p[0][..], &p[1][..]].concat()))
            .collect();
    }
    Ok(level[0])
}

impl Block {
    pub fn decode(b: &[u8]) -> Result<Self, ChainError> {
        let mut r = Reader::new(b);
        let header = BlockHeader::read(&mut r)?;
        let n = r.count(60)?;
        let mut txs = Vec::with_capacity(n);
        for _ in 0..n {
            txs.push(Transaction::read(&mut r)?);
        }
        if r.remaining() != 0 {
            return Err(bad("trailing bytes after block"));
        }
        Ok(Block { header, txs })
    }

    /// Accepts raw bytes or a hex string (whitespace tolerated).
    pub fn decode_hex(s: &str) -> Result<Self, ChainError> {
        let clean: String = s.split_whitespace().collect();
        let raw = hex::decode(clean).map_err(|e| bad(format!("hex: {e}")))?;
        Self::decode(&raw)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        put_varint(&mut out, self.txs.len() as u64);
        for tx in &self.txs {
            out.extend_from_slice(&tx.encode());
        }
        out
    }

    pub fn txids(&self) -> Vec<Hash32> {
        self.txs.iter().map(Transaction::txid).collect()
    }

    pub fn computed_merkle_root(&self) -> Result<Hash32, ChainError> {
        merkle_root(&self.txids())
    }

    pub fn verify_body(&self) -> bool {
        matches!(self.computed_merkle_root(), Ok(root) if root == self.header.merkle_root)
    }
}
