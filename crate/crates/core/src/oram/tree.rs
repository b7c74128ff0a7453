//! Encrypted bucket storage with a Merkle tree over bucket ciphertexts.
//!
//! The tree image is laid out exactly as its file: a 16-byte header followed
//! by buckets in level order, each bucket `Z × (nonce ‖ ciphertext ‖ tag)`.
//! Node hashes live in a sidecar (`2^(L+1) − 1` × 32 bytes); only the root is
//! trusted and kept outside the image.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::RngCore;

use super::block::OramBlock;
use super::{OramError, OramParams};
use crate::crypto::{sha256, Aead, Hash32, KEY_LEN, NONCE_LEN, TAG_LEN};

pub const TREE_MAGIC: [u8; 8] = *b"T3ORAM\0\0";
pub const TREE_VERSION: u16 = 1;
pub const TREE_HEADER_LEN: usize = 16;

const EMPTY_CHILD: Hash32 = [0u8; 32];

#[derive(Clone)]
pub struct OramTree {
    height: u32,
    bucket_z: usize,
    payload_bytes: usize,
    slot_len: usize,
    image: Vec<u8>,
    nodes: Vec<Hash32>,
    root: Hash32,
    aead: Aead,
}

impl std::fmt::Debug for OramTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OramTree")
            .field("height", &self.height)
            .field("bucket_z", &self.bucket_z)
            .field("payload_bytes", &self.payload_bytes)
            .field("root", &hex::encode(self.root))
            .finish()
    }
}

/// Heap index of the bucket at `depth` on the path to `leaf`.
#[inline]
pub fn path_node(height: u32, leaf: u32, depth: u32) -> usize {
    ((1usize << depth) - 1) + (leaf as usize >> (height - depth))
}

impl OramTree {
    /// A tree whose every slot holds an encrypted dummy.
    pub fn new_empty<R: RngCore>(params: &OramParams, key: &[u8; KEY_LEN], rng: &mut R) -> Self {
        let buckets = vec![Vec::new(); params.bucket_count()];
        Self::from_buckets(params, key, buckets, rng)
    }

    /// Builds a tree from plaintext bucket contents; short buckets are
    /// dummy-padded.
    pub fn from_buckets<R: RngCore>(
        params: &OramParams,
        key: &[u8; KEY_LEN],
        buckets: Vec<Vec<OramBlock>>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(buckets.len(), params.bucket_count());
        let height = params.height();
        let slot_len = NONCE_LEN + OramBlock::encoded_len(params.payload_bytes) + TAG_LEN;
        let bucket_len = slot_len * params.bucket_z;
        let mut image = vec![0u8; TREE_HEADER_LEN + bucket_len * buckets.len()];
        write_header(&mut image, height, params.bucket_z, params.payload_bytes);
        let mut tree = OramTree {
            height,
            bucket_z: params.bucket_z,
            payload_bytes: params.payload_bytes,
            slot_len,
            image,
            nodes: vec![EMPTY_CHILD; buckets.len()],
            root: EMPTY_CHILD,
            aead: Aead::new(key),
        };
        let dummy = OramBlock::dummy(params.payload_bytes);
        for (node, bucket) in buckets.iter().enumerate() {
            assert!(bucket.len() <= tree.bucket_z, "bucket overfilled");
            for slot in 0..tree.bucket_z {
                let block = bucket.get(slot).unwrap_or(&dummy);
                tree.encrypt_slot(node, slot, block, rng);
            }
        }
        for node in (0..tree.nodes.len()).rev() {
            tree.nodes[node] = tree.node_hash(node);
        }
        tree.root = tree.nodes[0];
        tree
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bucket_z(&self) -> usize {
        self.bucket_z
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload_bytes
    }

    pub fn leaf_count(&self) -> u32 {
        1 << self.height
    }

    pub fn bucket_count(&self) -> usize {
        self.nodes.len()
    }

    /// The trusted Merkle root.
    pub fn integrity_root(&self) -> Hash32 {
        self.root
    }

    /// The untrusted file image (header and buckets).
    pub fn image(&self) -> &[u8] {
        &self.image
    }

    /// Mutable access to the untrusted image, as an adversarial host has.
    pub fn image_mut(&mut self) -> &mut [u8] {
        &mut self.image
    }

    pub fn sidecar_mut(&mut self) -> &mut [Hash32] {
        &mut self.nodes
    }

    pub fn bucket_len(&self) -> usize {
        self.slot_len * self.bucket_z
    }

    pub fn bucket_offset(&self, node: usize) -> usize {
        TREE_HEADER_LEN + node * self.bucket_len()
    }

    fn bucket_bytes(&self, node: usize) -> &[u8] {
        let off = self.bucket_offset(node);
        &self.image[off..off + self.bucket_len()]
    }

    fn node_hash(&self, node: usize) -> Hash32 {
        let (left, right) = self.child_hashes(node);
        hash_node(self.bucket_bytes(node), &left, &right)
    }

    fn child_hashes(&self, node: usize) -> (Hash32, Hash32) {
        let l = 2 * node + 1;
        if l < self.nodes.len() {
            (self.nodes[l], self.nodes[l + 1])
        } else {
            (EMPTY_CHILD, EMPTY_CHILD)
        }
    }

    fn slot_aad(node: usize, slot: usize) -> [u8; 8] {
        let mut aad = [0u8; 8];
        aad[..4].copy_from_slice(&(node as u32).to_be_bytes());
        aad[4..].copy_from_slice(&(slot as u32).to_be_bytes());
        aad
    }

    fn encrypt_slot<R: RngCore>(&mut self, node: usize, slot: usize, block: &OramBlock, rng: &mut R) {
        debug_assert_eq!(block.payload.len(), self.payload_bytes);
        let off = self.bucket_offset(node) + slot * self.slot_len;
        let body_len = self.slot_len - NONCE_LEN - TAG_LEN;
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let aad = Self::slot_aad(node, slot);
        let slot_bytes = &mut self.image[off..off + self.slot_len];
        slot_bytes[..NONCE_LEN].copy_from_slice(&nonce);
        let body = &mut slot_bytes[NONCE_LEN..NONCE_LEN + body_len];
        block.encode_into(body);
        let tag = self.aead.seal_in_place(&nonce, &aad, body);
        slot_bytes[NONCE_LEN + body_len..].copy_from_slice(&tag);
    }

    fn decrypt_slot(&self, node: usize, slot: usize) -> Result<OramBlock, OramError> {
        let off = self.bucket_offset(node) + slot * self.slot_len;
        let body_len = self.slot_len - NONCE_LEN - TAG_LEN;
        let slot_bytes = &self.image[off..off + self.slot_len];
        let nonce: [u8; NONCE_LEN] = slot_bytes[..NONCE_LEN].try_into().unwrap();
        let mut body = slot_bytes[NONCE_LEN..NONCE_LEN + body_len].to_vec();
        let tag = &slot_bytes[NONCE_LEN + body_len..];
        self.aead
            .open_in_place(&nonce, &Self::slot_aad(node, slot), &mut body, tag)
            .map_err(|_| OramError::IntegrityViolation { node })?;
        Ok(OramBlock::decode(&body))
    }

    fn check_leaf(&self, leaf: u32) -> Result<(), OramError> {
        if leaf >= self.leaf_count() {
            return Err(OramError::LeafOutOfRange { leaf, leaves: self.leaf_count() });
        }
        Ok(())
    }

    /// Recomputes the path's hashes from bucket ciphertexts and sidecar
    /// siblings, and compares against the trusted root.
    fn verify_path(&self, leaf: u32) -> Result<(), OramError> {
        let bottom = path_node(self.height, leaf, self.height);
        let mut hash = self.node_hash_with_children(bottom, None);
        let mut child = bottom;
        for depth in (0..self.height).rev() {
            let node = path_node(self.height, leaf, depth);
            hash = self.node_hash_with_children(node, Some((child, hash)));
            child = node;
        }
        if hash != self.root {
            return Err(OramError::IntegrityViolation { node: 0 });
        }
        Ok(())
    }

    fn node_hash_with_children(&self, node: usize, known: Option<(usize, Hash32)>) -> Hash32 {
        let (mut left, mut right) = self.child_hashes(node);
        if let Some((child, h)) = known {
            if child == 2 * node + 1 {
                left = h;
            } else {
                right = h;
            }
        }
        hash_node(self.bucket_bytes(node), &left, &right)
    }

    /// Decrypts every slot on the path to `leaf`, root bucket first.
    pub fn read_path(&self, leaf: u32) -> Result<Vec<OramBlock>, OramError> {
        self.check_leaf(leaf)?;
        self.verify_path(leaf)?;
        let mut out = Vec::with_capacity((self.height as usize + 1) * self.bucket_z);
        for depth in 0..=self.height {
            let node = path_node(self.height, leaf, depth);
            for slot in 0..self.bucket_z {
                out.push(self.decrypt_slot(node, slot)?);
            }
        }
        Ok(out)
    }

    /// Re-encrypts the whole path with fresh nonces. `blocks` holds
    /// `(L + 1) · Z` entries, root bucket first.
    pub fn write_path<R: RngCore>(
        &mut self,
        leaf: u32,
        blocks: &[OramBlock],
        rng: &mut R,
    ) -> Result<(), OramError> {
        self.check_leaf(leaf)?;
        assert_eq!(blocks.len(), (self.height as usize + 1) * self.bucket_z);
        for depth in 0..=self.height {
            let node = path_node(self.height, leaf, depth);
            for slot in 0..self.bucket_z {
                let block = &blocks[depth as usize * self.bucket_z + slot];
                self.encrypt_slot(node, slot, block, rng);
            }
        }
        for depth in (0..=self.height).rev() {
            let node = path_node(self.height, leaf, depth);
            self.nodes[node] = self.node_hash(node);
        }
        self.root = self.nodes[0];
        Ok(())
    }

    /// Full recomputation of the Merkle tree plus authenticated decryption of
    /// every slot.
    pub fn verify_all(&self) -> Result<(), OramError> {
        let mut computed = vec![EMPTY_CHILD; self.nodes.len()];
        for node in (0..self.nodes.len()).rev() {
            let l = 2 * node + 1;
            let (left, right) = if l < computed.len() {
                (computed[l], computed[l + 1])
            } else {
                (EMPTY_CHILD, EMPTY_CHILD)
            };
            computed[node] = hash_node(self.bucket_bytes(node), &left, &right);
            for slot in 0..self.bucket_z {
                self.decrypt_slot(node, slot)?;
            }
        }
        if computed[0] != self.root {
            return Err(OramError::IntegrityViolation { node: 0 });
        }
        Ok(())
    }

    /// Decrypts every bucket; test and tooling use only.
    pub fn decrypt_all(&self) -> Result<Vec<Vec<OramBlock>>, OramError> {
        (0..self.nodes.len())
            .map(|node| (0..self.bucket_z).map(|s| self.decrypt_slot(node, s)).collect())
            .collect()
    }

    pub fn sidecar_bytes(&self) -> Vec<u8> {
        self.nodes.iter().flat_map(|h| h.iter().copied()).collect()
    }

    pub fn save(&self, tree_path: &Path, sidecar_path: &Path) -> Result<(), OramError> {
        write_file(tree_path, &self.image)?;
        write_file(sidecar_path, &self.sidecar_bytes())?;
        Ok(())
    }

    /// Loads a tree image and checks it fully against the trusted root.
    pub fn load(
        params: &OramParams,
        key: &[u8; KEY_LEN],
        tree_path: &Path,
        sidecar_path: &Path,
        trusted_root: Hash32,
    ) -> Result<Self, OramError> {
        let image = fs::read(tree_path)?;
        let sidecar = fs::read(sidecar_path)?;
        let height = params.height();
        let slot_len = NONCE_LEN + OramBlock::encoded_len(params.payload_bytes) + TAG_LEN;
        let expected = TREE_HEADER_LEN + slot_len * params.bucket_z * params.bucket_count();
        if image.len() != expected {
            return Err(OramError::BadFile(format!(
                "tree file is {} bytes, expected {expected}",
                image.len()
            )));
        }
        let mut header = [0u8; TREE_HEADER_LEN];
        write_header(&mut header, height, params.bucket_z, params.payload_bytes);
        if image[..TREE_HEADER_LEN] != header {
            return Err(OramError::BadFile("tree header does not match parameters".into()));
        }
        if sidecar.len() != 32 * params.bucket_count() {
            return Err(OramError::BadFile("sidecar length mismatch".into()));
        }
        let nodes = sidecar.chunks_exact(32).map(|c| c.try_into().unwrap()).collect();
        let tree = OramTree {
            height,
            bucket_z: params.bucket_z,
            payload_bytes: params.payload_bytes,
            slot_len,
            image,
            nodes,
            root: trusted_root,
            aead: Aead::new(key),
        };
        tree.verify_all()?;
        Ok(tree)
    }
}

fn hash_node(bucket: &[u8], left: &Hash32, right: &Hash32) -> Hash32 {
    let mut buf = Vec::with_capacity(bucket.len() + 64);
    buf.extend_from_slice(bucket);
    buf.extend_from_slice(left);
    buf.extend_from_slice(right);
    sha256(&buf)
}

fn write_header(image: &mut [u8], height: u32, z: usize, payload: usize) {
    image[..8].copy_from_slice(&TREE_MAGIC);
    image[8..10].copy_from_slice(&TREE_VERSION.to_be_bytes());
    image[10] = height as u8;
    image[11] = z as u8;
    image[12..16].copy_from_slice(&(payload as u32).to_be_bytes());
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}
