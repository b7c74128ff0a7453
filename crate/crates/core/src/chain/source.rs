use std::collections::BTreeMap;
use std::path::PathBuf;

use super::block::Block;
use super::ChainError;

/// Fetch-by-height interface in the shape of a node's `getblock` RPC.
pub trait BlockSource: Send {
    /// Raw block for `height`, or `None` if not yet available.
    fn block_at(&self, height: u32) -> Result<Option<Block>, ChainError>;
}

/// Reads `<dir>/<height>.hex` (hex text) or `<dir>/<height>.bin` (raw bytes).
#[derive(Clone, Debug)]
pub struct DirBlockSource {
    dir: PathBuf,
}

impl DirBlockSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirBlockSource { dir: dir.into() }
    }

    pub fn hex_path(&self, height: u32) -> PathBuf {
        self.dir.join(format!("{height}.hex"))
    }

    /// Writes a block in the hex form this source reads.
    pub fn put(&self, height: u32, block: &Block) -> Result<(), ChainError> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".{height}.hex.tmp"));
        std::fs::write(&tmp, hex::encode(block.encode()))?;
        std::fs::rename(tmp, self.hex_path(height))?;
        Ok(())
    }
}

impl BlockSource for DirBlockSource {
    fn block_at(&self, height: u32) -> Result<Option<Block>, ChainError> {
        match std::fs::read_to_string(self.hex_path(height)) {
            Ok(s) => return Block::decode_hex(&s).map(Some),
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            Err(_) => {}
        }
        match std::fs::read(self.dir.join(format!("{height}.bin"))) {
            Ok(b) => Block::decode(&b).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct MemBlockSource {
    pub blocks: BTreeMap<u32, Block>,
}

impl BlockSource for MemBlockSource {
    fn block_at(&self, height: u32) -> Result<Option<Block>, ChainError> {
        Ok(self.blocks.get(&height).cloned())
    }
}
