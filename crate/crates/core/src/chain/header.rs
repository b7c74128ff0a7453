use super::wire::Reader;
use super::{bad, ChainError};
use crate::crypto::{sha256d, Hash32};

pub const HEADER_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub version: u32,
    pub prev_hash: Hash32,
    pub merkle_root: Hash32,
    pub time: u32,
    pub bits: u32,
    pub nonce: u32,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.version.to_le_bytes());
        b[4..36].copy_from_slice(&self.prev_hash);
        b[36..68].copy_from_slice(&self.merkle_root);
        b[68..72].copy_from_slice(&self.time.to_le_bytes());
        b[72..76].copy_from_slice(&self.bits.to_le_bytes());
        b[76..80].copy_from_slice(&self.nonce.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ChainError> {
        if b.len() != HEADER_LEN {
            return Err(bad(format!("header is {} bytes", b.len())));
        }
        Self::read(&mut Reader::new(b))
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, ChainError> {
        Ok(BlockHeader {
            version: r.u32_le()?,
            prev_hash: r.array()?,
            merkle_root: r.array()?,
            time: r.u32_le()?,
            bits: r.u32_le()?,
            nonce: r.u32_le()?,
        })
    }

    /// Double-SHA256 of the serialization, in internal byte order.
    pub fn hash(&self) -> Hash32 {
        sha256d(&self.to_bytes())
    }

    pub fn check_pow(&self) -> Result<(), ChainError> {
        let target = compact_to_target(self.bits)?;
        if hash_meets_target(&self.hash(), &target) {
            Ok(())
        } else {
            Err(ChainError::BadPow)
        }
    }
}

/// Hash read as a little-endian integer, compared with a big-endian target.
pub(crate) fn hash_meets_target(hash: &Hash32, target_be: &[u8; 32]) -> bool {
    let mut h = *hash;
    h.reverse();
    h <= *target_be
}

/// Decodes compact `nbits` to a 256-bit big-endian target. Negative or
/// overflowing encodings are rejected.
pub fn compact_to_target(bits: u32) -> Result<[u8; 32], ChainError> {
    let exp = (bits >> 24) as usize;
    let mut mant = bits & 0x007f_ffff;
    if bits & 0x0080_0000 != 0 && mant != 0 {
        return Err(bad("negative compact target"));
    }
    let mut out = [0u8; 32];
    if exp <= 3 {
        mant >>= 8 * (3 - exp);
        out[28..].copy_from_slice(&mant.to_be_bytes());
        return Ok(out);
    }
    let m = mant.to_be_bytes(); // m[0] is always zero
    // Mantissa byte i (of 3) lands at big-endian index 32 - exp + i.
    for (i, &byte) in m[1..].iter().enumerate() {
        let idx = 32 + i as isize - exp as isize;
        if idx < 0 {
            if byte != 0 {
                return Err(bad("compact target overflows 256 bits"));
            }
        } else if idx < 32 {
            out[idx as usize] = byte;
        }
    }
    Ok(out)
}

/// Smallest compact encoding of `target`, rounding the mantissa down.
pub fn target_to_compact(target_be: &[u8; 32]) -> u32 {
    let Some(first) = target_be.iter().position(|&b| b != 0) else {
        return 0;
    };
    let mut size = 32 - first;
    let mut m = [0u8; 3];
    for (i, slot) in m.iter_mut().enumerate() {
        *slot = *target_be.get(first + i).unwrap_or(&0);
    }
    let mut mant = u32::from_be_bytes([0, m[0], m[1], m[2]]);
    if mant & 0x0080_0000 != 0 {
        mant >>= 8;
        size += 1;
    }
    ((size as u32) << 24) | mant
}

/// Grinds the nonce (and, on wrap, the timestamp) until the header meets
/// `bits`. Returns the header and the number of hashes tried.
pub fn mine(mut template: BlockHeader, bits: u32, max_tries: u64) -> Result<(BlockHeader, u64), ChainError> {
    template.bits = bits;
    let target = compact_to_target(bits)?;
    for tries in 1..=max_tries {
        if hash_meets_target(&template.hash(), &target) {
            return Ok((template, tries));
        }
        let (n, wrapped) = template.nonce.overflowing_add(1);
        template.nonce = n;
        if wrapped {
            template.time = template.time.wrapping_add(1);
        }
    }
    Err(ChainError::NonceExhausted)
}
