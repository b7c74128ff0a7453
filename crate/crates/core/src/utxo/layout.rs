//! Records packed into a fixed-size ORAM block payload.
//!
//! The payload is `capacity` back-to-back 68-byte record slots with no
//! header; empty slots are all-zero, so every block serializes to the same
//! length whatever its occupancy.

use subtle::{Choice, ConstantTimeEq};

use super::record::{UtxoRecord, RECORD_LEN};
use super::UtxoError;
use crate::enclave::oblivious::CtAssign;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OramBlockLayout {
    pub capacity: usize,
}

impl OramBlockLayout {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        OramBlockLayout { capacity }
    }

    /// Layout for a payload of `payload_bytes`; must be a whole number of records.
    pub fn for_payload(payload_bytes: usize) -> Result<Self, UtxoError> {
        if payload_bytes == 0 || !payload_bytes.is_multiple_of(RECORD_LEN) {
            return Err(UtxoError::MalformedPayload(format!(
                "{payload_bytes} bytes is not a whole number of records"
            )));
        }
        Ok(Self::new(payload_bytes / RECORD_LEN))
    }

    pub fn payload_bytes(&self) -> usize {
        self.capacity * RECORD_LEN
    }

    fn check(&self, payload: &[u8]) -> Result<(), UtxoError> {
        if payload.len() != self.payload_bytes() {
            return Err(UtxoError::MalformedPayload(format!(
                "expected {} bytes, got {}",
                self.payload_bytes(),
                payload.len()
            )));
        }
        Ok(())
    }

    pub fn empty(&self) -> Vec<u8> {
        vec![0u8; self.payload_bytes()]
    }

    /// Serializes records into a block; fails if they do not fit.
    pub fn pack(&self, records: &[UtxoRecord]) -> Result<Vec<u8>, UtxoError> {
        if records.len() > self.capacity {
            return Err(UtxoError::BlockFull { capacity: self.capacity });
        }
        let mut out = self.empty();
        for (slot, r) in out.chunks_exact_mut(RECORD_LEN).zip(records) {
            slot.copy_from_slice(&r.to_bytes());
        }
        Ok(out)
    }

    /// Real (non-dummy) records in slot order.
    pub fn unpack(&self, payload: &[u8]) -> Result<Vec<UtxoRecord>, UtxoError> {
        self.check(payload)?;
        let mut out = Vec::new();
        for slot in payload.chunks_exact(RECORD_LEN) {
            let r = UtxoRecord::from_bytes(slot)?;
            if !r.is_dummy() {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn occupied(&self, payload: &[u8]) -> Result<usize, UtxoError> {
        self.check(payload)?;
        Ok(payload.chunks_exact(RECORD_LEN).filter(|s| s[..32] != [0u8; 32]).count())
    }

    /// Writes `record` into the first empty slot. Re-inserting an existing
    /// `(txid, vout)` overwrites it in place.
    pub fn insert(&self, payload: &mut [u8], record: &UtxoRecord) -> Result<(), UtxoError> {
        self.check(payload)?;
        if record.is_dummy() {
            return Err(UtxoError::MalformedPayload("record has an all-zero txid".into()));
        }
        let bytes = record.to_bytes();
        let mut free = None;
        for (i, slot) in payload.chunks_exact_mut(RECORD_LEN).enumerate() {
            if slot[..36] == bytes[..36] {
                slot.copy_from_slice(&bytes);
                return Ok(());
            }
            if free.is_none() && slot[..32] == [0u8; 32] {
                free = Some(i);
            }
        }
        let i = free.ok_or(UtxoError::BlockFull { capacity: self.capacity })?;
        payload[i * RECORD_LEN..(i + 1) * RECORD_LEN].copy_from_slice(&bytes);
        Ok(())
    }

    /// Zeroes the slot holding `(txid, vout)`. Returns the removed record.
    pub fn remove(&self, payload: &mut [u8], txid: &[u8; 32], vout: u32) -> Result<Option<UtxoRecord>, UtxoError> {
        self.check(payload)?;
        for slot in payload.chunks_exact_mut(RECORD_LEN) {
            if slot[..32] == txid[..] && slot[32..36] == vout.to_be_bytes() {
                let r = UtxoRecord::from_bytes(slot)?;
                slot.fill(0);
                return Ok(Some(r));
            }
        }
        Ok(None)
    }

    /// Up to `max_out` records owned by `pkh`, dummy-padded to exactly
    /// `max_out`. Every slot is compared against every output position, so
    /// the access pattern depends only on `capacity` and `max_out`.
    pub fn extract(&self, payloads: &[&[u8]], pkh: &[u8; 20], max_out: usize) -> Result<Vec<UtxoRecord>, UtxoError> {
        for p in payloads {
            self.check(p)?;
        }
        let mut out = vec![[0u8; RECORD_LEN]; max_out];
        let mut found = 0u32;
        for p in payloads {
            for slot in p.chunks_exact(RECORD_LEN) {
                let real = !slot[..32].ct_eq(&[0u8; 32]);
                let hit: Choice = real & slot[48..68].ct_eq(pkh);
                for (k, o) in out.iter_mut().enumerate() {
                    let here = hit & (k as u32).ct_eq(&found);
                    o.ct_assign(slot.try_into().unwrap(), here);
                }
                found += hit.unwrap_u8() as u32;
            }
        }
        out.iter().map(|b| UtxoRecord::from_bytes(b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u8, pkh: u8) -> UtxoRecord {
        UtxoRecord::new([i; 32], i as u32, 1000 + i as u64, 10, [pkh; 20]).unwrap()
    }

    #[test]
    fn insert_then_extract() {
        let l = OramBlockLayout::new(8);
        assert_eq!(l.payload_bytes(), 544);
        let mut b = l.empty();
        l.insert(&mut b, &rec(1, 7)).unwrap();
        l.insert(&mut b, &rec(2, 9)).unwrap();
        let got = l.extract(&[&b], &[7; 20], 2).unwrap();
        assert_eq!(got, vec![rec(1, 7), UtxoRecord::DUMMY]);
    }

    #[test]
    fn empty_block_gives_dummies() {
        let l = OramBlockLayout::new(8);
        let got = l.extract(&[&l.empty()], &[7; 20], 3).unwrap();
        assert_eq!(got, vec![UtxoRecord::DUMMY; 3]);
    }

    #[test]
    fn block_full_on_overflow() {
        let l = OramBlockLayout::new(3);
        let mut b = l.empty();
        for i in 1..=3 {
            l.insert(&mut b, &rec(i, 1)).unwrap();
        }
        assert!(matches!(l.insert(&mut b, &rec(4, 1)), Err(UtxoError::BlockFull { capacity: 3 })));
        // Overwrite of an existing outpoint still succeeds.
        l.insert(&mut b, &rec(2, 1)).unwrap();
    }

    #[test]
    fn remove_is_exact() {
        let l = OramBlockLayout::new(4);
        let mut b = l.pack(&[rec(1, 1), rec(2, 1)]).unwrap();
        assert!(l.remove(&mut b, &[1; 32], 2).unwrap().is_none());
        assert_eq!(l.remove(&mut b, &[1; 32], 1).unwrap(), Some(rec(1, 1)));
        assert_eq!(l.unpack(&b).unwrap(), vec![rec(2, 1)]);
        assert_eq!(&b[..RECORD_LEN], &[0u8; RECORD_LEN][..]);
    }

    #[test]
    fn extract_caps_and_spans_blocks() {
        let l = OramBlockLayout::new(2);
        let a = l.pack(&[rec(1, 5), rec(2, 5)]).unwrap();
        let b = l.pack(&[rec(3, 6), rec(4, 5)]).unwrap();
        assert_eq!(l.extract(&[&a, &b], &[5; 20], 2).unwrap(), vec![rec(1, 5), rec(2, 5)]);
        assert_eq!(
            l.extract(&[&a, &b], &[5; 20], 4).unwrap(),
            vec![rec(1, 5), rec(2, 5), rec(4, 5), UtxoRecord::DUMMY]
        );
    }

    #[test]
    fn malformed_lengths() {
        let l = OramBlockLayout::new(2);
        assert!(l.unpack(&[0u8; 10]).is_err());
        assert!(OramBlockLayout::for_payload(100).is_err());
        assert_eq!(OramBlockLayout::for_payload(544).unwrap().capacity, 8);
        assert!(l.pack(&[rec(1, 1), rec(2, 1), rec(3, 1)]).is_err());
    }
}
