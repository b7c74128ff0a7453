//! Bitcoin-format header chain, block decoding, and pruning into ORAM
//! update batches.

mod block;
mod header;
mod headers;
mod prune;
mod source;
mod tx;
mod wire;

pub use block::{merkle_root, Block};
pub use header::{compact_to_target, mine, target_to_compact, BlockHeader, HEADER_LEN};
pub use headers::{HeaderChain, CHAIN_TAG_LEN};
pub use prune::{classify_output, last_push, prune, OutputKind, PruneStats, Spend, UpdateBatch};
pub use source::{BlockSource, DirBlockSource, MemBlockSource};
pub use tx::{OutPoint, Transaction, TxIn, TxOut};

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("header does not link to the chain tip")]
    BadLink,
    #[error("proof of work does not meet the target")]
    BadPow,
    #[error("bad encoding: {0}")]
    BadEncoding(String),
    #[error("block has no transactions")]
    EmptyTxList,
    #[error("merkle root mismatch")]
    BadMerkle,
    #[error("nonce space exhausted")]
    NonceExhausted,
    #[error("header chain integrity tag mismatch")]
    IntegrityTag,
    #[error(transparent)]
    Utxo(#[from] crate::utxo::UtxoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn bad(msg: impl Into<String>) -> ChainError {
    ChainError::BadEncoding(msg.into())
}
