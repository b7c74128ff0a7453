//! Keyed address → block-id mappings.

use rand::RngCore;

use super::UtxoError;
use crate::crypto::hmac_sha256;

/// Secret PRF key; generated inside the trusted boundary and only ever
/// persisted through sealed state.
#[derive(Clone)]
pub struct MapKey([u8; 32]);

impl std::fmt::Debug for MapKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MapKey(..)")
    }
}

impl MapKey {
    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        MapKey(k)
    }

    pub fn from_bytes(k: [u8; 32]) -> Self {
        MapKey(k)
    }

    fn prf_u64(&self, parts: &[&[u8]]) -> u64 {
        let h = hmac_sha256(&self.0, parts);
        u64::from_be_bytes(h[..8].try_into().unwrap())
    }
}

/// Block id for an address: first 8 bytes of HMAC-SHA256(k_b, pkh), big-endian,
/// reduced mod N.
pub fn oblock_map(pkh: &[u8; 20], key: &MapKey, n: u32) -> u32 {
    debug_assert!(n.is_power_of_two());
    (key.prf_u64(&[pkh]) % n as u64) as u32
}

/// The `delta` candidate blocks of an address: `PRF(k_b, pkh ‖ i) mod N`
/// with `i` as a 4-byte big-endian index.
pub fn oblock_map_multi(
    pkh: &[u8; 20],
    key: &MapKey,
    delta: u32,
    delta_max: u32,
    n: u32,
) -> Result<Vec<u32>, UtxoError> {
    if delta == 0 || delta > delta_max {
        return Err(UtxoError::DeltaOutOfRange { delta, max: delta_max });
    }
    Ok((0..delta)
        .map(|i| (key.prf_u64(&[pkh, &i.to_be_bytes()]) % n as u64) as u32)
        .collect())
}

/// Which of the `delta` blocks holds output `(txid, vout)`.
pub fn route_output(pkh: &[u8; 20], txid: &[u8; 32], vout: u32, key: &MapKey, delta: u32) -> u32 {
    (key.prf_u64(&[pkh, txid, &vout.to_be_bytes()]) % delta as u64) as u32
}

/// `⌈e·m/N⌉`: records per block that suffice with probability ≥ 1 − 1/N when
/// `m` items are spread by a random function over `N` blocks.
pub fn capacity_for(m: u64, n: u64) -> u64 {
    assert!(m >= 1 && n >= 1);
    (std::f64::consts::E * m as f64 / n as f64).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let k = MapKey::from_bytes([4; 32]);
        assert_eq!(oblock_map(&[1; 20], &k, 1 << 12), oblock_map(&[1; 20], &k, 1 << 12));
        let other = MapKey::from_bytes([5; 32]);
        let differs = (0..20u8).any(|i| oblock_map(&[i; 20], &k, 1 << 20) != oblock_map(&[i; 20], &other, 1 << 20));
        assert!(differs);
    }

    #[test]
    fn delta_bounds() {
        let k = MapKey::from_bytes([4; 32]);
        assert!(oblock_map_multi(&[1; 20], &k, 0, 4, 64).is_err());
        assert!(oblock_map_multi(&[1; 20], &k, 5, 4, 64).is_err());
        assert_eq!(oblock_map_multi(&[1; 20], &k, 2, 4, 64).unwrap().len(), 2);
        // A smaller delta is a prefix of a larger one.
        let four = oblock_map_multi(&[1; 20], &k, 4, 4, 64).unwrap();
        assert_eq!(&four[..2], &oblock_map_multi(&[1; 20], &k, 2, 4, 64).unwrap()[..]);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_for(1 << 12, 1 << 12), 3);
        assert_eq!(capacity_for(1 << 16, 1 << 12), 44);
        assert_eq!(capacity_for(1, 1), 3);
    }
}
