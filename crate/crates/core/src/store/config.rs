use serde::{Deserialize, Serialize};

use crate::utxo::{DEFAULT_BLOCK_RECORDS, DEFAULT_MAX_OUT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    /// Serve repeated reads of a block within one interval.
    #[default]
    Allow,
    /// Reject a block id already read since the last sync.
    Strict,
}

/// How many candidate blocks a multi-block query reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    /// Every query reads all `delta_max` blocks.
    #[default]
    Fixed,
    /// The client picks `1..=delta_max`, reading only that prefix of its
    /// blocks; the count is visible to the host.
    ClientChosen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub max_out: usize,
    /// Blocks per address; 1 = single-block mapping.
    pub delta_max: u32,
    pub delta_mode: DeltaMode,
    pub duplicate_policy: DuplicatePolicy,
    /// Reads allowed to wait during a sync before new ones are refused.
    pub park_limit: usize,
    pub block_records: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            max_out: DEFAULT_MAX_OUT,
            delta_max: 1,
            delta_mode: DeltaMode::Fixed,
            duplicate_policy: DuplicatePolicy::Allow,
            park_limit: 10_000,
            block_records: DEFAULT_BLOCK_RECORDS,
        }
    }
}
