//! Address-to-block mapping and in-block record packing.

mod layout;
mod mapping;
mod record;

pub use layout::OramBlockLayout;
pub use mapping::{capacity_for, oblock_map, oblock_map_multi, route_output, MapKey};
pub use record::{UtxoRecord, MAX_MONEY, RECORD_LEN};

/// Records per block by default (544-byte payload).
pub const DEFAULT_BLOCK_RECORDS: usize = 8;
pub const DEFAULT_MAX_OUT: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum UtxoError {
    #[error("block full ({capacity} records)")]
    BlockFull { capacity: usize },
    #[error("malformed block payload: {0}")]
    MalformedPayload(String),
    #[error("amount {0} exceeds the money supply")]
    AmountOutOfRange(u64),
    #[error("delta {delta} out of range 1..={max}")]
    DeltaOutOfRange { delta: u32, max: u32 },
}
