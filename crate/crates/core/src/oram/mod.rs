//! Tree-based ORAM with Path-ORAM and Circuit-ORAM eviction, a recursive
//! position map, and a read-only access path for immutable snapshots.

mod block;
pub mod evict;
mod params;
mod recursive;
mod stash;
pub mod trace;
mod tree;

pub use block::{OramBlock, BLOCK_HEADER_LEN, DUMMY_BID};
pub use evict::evict;
pub use params::{
    default_max_stash, OramParams, Strategy, DEFAULT_RECURSION_CHI, LEAF_LABEL_BYTES, TOP_MAP_BUDGET_BYTES,
};
pub use recursive::{level_key, Level, LevelMeta, Op, Oram, OramMeta, OramState};
pub use stash::Stash;
pub use trace::{PathOp, TraceEvent, TraceLog};
pub use tree::{path_node, OramTree, TREE_HEADER_LEN, TREE_MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum OramError {
    #[error("invalid ORAM parameters: {0}")]
    InvalidParams(String),
    #[error("integrity violation at bucket {node}")]
    IntegrityViolation { node: usize },
    #[error("stash overflow (capacity {capacity})")]
    StashOverflow { capacity: usize },
    #[error("block id {bid} out of range for N = {n}")]
    BidOutOfRange { bid: u32, n: u32 },
    #[error("leaf {leaf} out of range ({leaves} leaves)")]
    LeafOutOfRange { leaf: u32, leaves: u32 },
    #[error("payload is {got} bytes, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("bad tree file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
