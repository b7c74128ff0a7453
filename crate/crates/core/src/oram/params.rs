use serde::{Deserialize, Serialize};

use super::OramError;

/// Plaintext position-map budget held inside the trusted boundary, in bytes.
pub const TOP_MAP_BUDGET_BYTES: usize = 8 * 1024;
/// Width of one leaf label in a position-map block.
pub const LEAF_LABEL_BYTES: usize = 4;

pub const DEFAULT_RECURSION_CHI: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[serde(alias = "path")]
    PathOram,
    #[serde(alias = "circuit")]
    CircuitOram,
}

impl Strategy {
    pub fn min_bucket_z(self) -> usize {
        match self {
            Strategy::PathOram => 4,
            Strategy::CircuitOram => 2,
        }
    }

    /// The bucket size each scheme is normally run with.
    pub fn default_bucket_z(self) -> usize {
        self.min_bucket_z()
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" | "path-oram" => Ok(Strategy::PathOram),
            "circuit" | "circuit-oram" => Ok(Strategy::CircuitOram),
            other => Err(format!("unknown strategy `{other}` (expected path|circuit)")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::PathOram => "path",
            Strategy::CircuitOram => "circuit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OramParams {
    /// Number of logical blocks; a power of two.
    pub capacity_n: u32,
    pub bucket_z: usize,
    pub payload_bytes: usize,
    pub strategy: Strategy,
    /// Leaf labels packed into one position-map block.
    pub recursion_chi: usize,
    pub max_stash: usize,
}

impl OramParams {
    /// Parameters with the scheme's default bucket size, default recursion fan-out
    /// and a stash of `2·log₂(N)·Z` blocks.
    pub fn new(capacity_n: u32, payload_bytes: usize, strategy: Strategy) -> Self {
        Self::with_z(capacity_n, strategy.default_bucket_z(), payload_bytes, strategy)
    }

    pub fn with_z(capacity_n: u32, bucket_z: usize, payload_bytes: usize, strategy: Strategy) -> Self {
        OramParams {
            capacity_n,
            bucket_z,
            payload_bytes,
            strategy,
            recursion_chi: DEFAULT_RECURSION_CHI,
            max_stash: default_max_stash(capacity_n, bucket_z),
        }
    }

    pub fn validate(&self) -> Result<(), OramError> {
        let bad = |msg: String| Err(OramError::InvalidParams(msg));
        if self.capacity_n < 2 || !self.capacity_n.is_power_of_two() {
            return bad(format!("capacity {} is not a power of two >= 2", self.capacity_n));
        }
        if self.capacity_n > 1 << 31 {
            return bad(format!("capacity {} exceeds 2^31", self.capacity_n));
        }
        let min_z = self.strategy.min_bucket_z();
        if self.bucket_z < min_z {
            return bad(format!(
                "bucket size {} below the {} minimum of {}",
                self.bucket_z, self.strategy, min_z
            ));
        }
        if self.recursion_chi < 2 {
            return bad(format!("recursion fan-out {} must be >= 2", self.recursion_chi));
        }
        if self.payload_bytes == 0 {
            return bad("payload must be non-empty".into());
        }
        if self.max_stash == 0 {
            return bad("stash must hold at least one block".into());
        }
        Ok(())
    }

    /// Tree height `L = log₂ N`; paths hold `L + 1` buckets.
    pub fn height(&self) -> u32 {
        self.capacity_n.trailing_zeros()
    }

    pub fn bucket_count(&self) -> usize {
        (1usize << (self.height() + 1)) - 1
    }

    pub fn slots_per_path(&self) -> usize {
        (self.height() as usize + 1) * self.bucket_z
    }

    /// Parameters of the position-map tree that stores leaf labels for
    /// `entries` blocks of the level below.
    pub(crate) fn map_level(&self, entries: u64) -> OramParams {
        let blocks = entries.div_ceil(self.recursion_chi as u64);
        let n = blocks.next_power_of_two().max(2) as u32;
        OramParams {
            capacity_n: n,
            bucket_z: self.bucket_z,
            payload_bytes: self.recursion_chi * LEAF_LABEL_BYTES,
            strategy: self.strategy,
            recursion_chi: self.recursion_chi,
            max_stash: default_max_stash(n, self.bucket_z),
        }
    }

    /// Parameters of every position-map tree, outermost first. Empty when the
    /// whole map fits the in-enclave budget.
    pub fn map_levels(&self) -> Vec<OramParams> {
        let mut levels = Vec::new();
        let mut entries = self.capacity_n as u64;
        while entries as usize * LEAF_LABEL_BYTES > TOP_MAP_BUDGET_BYTES {
            let lvl = self.map_level(entries);
            entries = entries.div_ceil(self.recursion_chi as u64);
            levels.push(lvl);
        }
        levels
    }

    /// Number of labels held in the plaintext top-level map.
    pub fn top_map_entries(&self) -> usize {
        let mut entries = self.capacity_n as u64;
        while entries as usize * LEAF_LABEL_BYTES > TOP_MAP_BUDGET_BYTES {
            entries = entries.div_ceil(self.recursion_chi as u64);
        }
        entries as usize
    }
}

pub fn default_max_stash(capacity_n: u32, bucket_z: usize) -> usize {
    let log_n = capacity_n.max(2).trailing_zeros() as usize;
    2 * log_n * bucket_z
}
