use std::path::Path;

use super::header::{BlockHeader, HEADER_LEN};
use super::{bad, ChainError};
use crate::crypto::{hmac_sha256, hmac_verify, Hash32};

pub const CHAIN_TAG_LEN: usize = 32;
const TAG_DOMAIN: &[u8] = b"t3-header-chain";

/// Append-only header chain from genesis. Reorgs are rejected.
#[derive(Clone, Debug, Default)]
pub struct HeaderChain {
    headers: Vec<BlockHeader>,
    genesis: Option<Hash32>,
}

impl HeaderChain {
    /// `genesis` pins the hash of the first header, if given.
    pub fn new(genesis: Option<Hash32>) -> Self {
        HeaderChain { headers: Vec::new(), genesis }
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headers.is_empty()
    }

    /// Height of the tip (genesis = 0).
    pub fn tip_height(&self) -> Option<u32> {
        self.headers.len().checked_sub(1).map(|h| h as u32)
    }

    pub fn tip(&self) -> Option<&BlockHeader> {
        self.headers.last()
    }

    pub fn get(&self, height: u32) -> Option<&BlockHeader> {
        self.headers.get(height as usize)
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn range(&self, start: u32, count: usize) -> &[BlockHeader] {
        let s = (start as usize).min(self.headers.len());
        let e = s.saturating_add(count).min(self.headers.len());
        &self.headers[s..e]
    }

    pub fn verify_header(&self, h: &BlockHeader) -> Result<(), ChainError> {
        match self.headers.last() {
            Some(tip) if h.prev_hash != tip.hash() => return Err(ChainError::BadLink),
            None if self.genesis.is_some_and(|g| g != h.hash()) => return Err(ChainError::BadLink),
            _ => {}
        }
        h.check_pow()
    }

    pub fn append(&mut self, h: BlockHeader) -> Result<u32, ChainError> {
        self.verify_header(&h)?;
        self.headers.push(h);
        Ok(self.headers.len() as u32 - 1)
    }

    /// Approximate on-disk size: 80 bytes per header plus the tag.
    pub fn file_len(&self) -> usize {
        self.headers.len() * HEADER_LEN + CHAIN_TAG_LEN
    }

    pub fn encode(&self, key: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.file_len());
        for h in &self.headers {
            out.extend_from_slice(&h.to_bytes());
        }
        let tag = hmac_sha256(key, &[TAG_DOMAIN, &out]);
        out.extend_from_slice(&tag);
        out
    }

    /// Checks the tag, then re-verifies every link and proof of work.
    pub fn decode(bytes: &[u8], key: &[u8], genesis: Option<Hash32>) -> Result<Self, ChainError> {
        if bytes.len() < CHAIN_TAG_LEN || !(bytes.len() - CHAIN_TAG_LEN).is_multiple_of(HEADER_LEN) {
            return Err(bad("header file has a bad length"));
        }
        let (body, tag) = bytes.split_at(bytes.len() - CHAIN_TAG_LEN);
        if !hmac_verify(key, &[TAG_DOMAIN, body], tag) {
            return Err(ChainError::IntegrityTag);
        }
        let mut chain = HeaderChain::new(genesis);
        for raw in body.chunks_exact(HEADER_LEN) {
            chain.append(BlockHeader::from_bytes(raw)?)?;
        }
        Ok(chain)
    }

    pub fn save(&self, path: &Path, key: &[u8]) -> Result<(), ChainError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode(key))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, key: &[u8], genesis: Option<Hash32>) -> Result<Self, ChainError> {
        Self::decode(&std::fs::read(path)?, key, genesis)
    }
}
