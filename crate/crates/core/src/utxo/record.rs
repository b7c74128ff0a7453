use super::UtxoError;

pub const RECORD_LEN: usize = 68;
pub const MAX_MONEY: u64 = 21_000_000 * 100_000_000;

/// A pruned unspent output: `txid ‖ vout ‖ amount ‖ height ‖ pkh`, integers
/// big-endian, txid in natural (hash) byte order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UtxoRecord {
    pub txid: [u8; 32],
    pub vout: u32,
    pub amount: u64,
    pub height: u32,
    pub pkh: [u8; 20],
}

impl UtxoRecord {
    pub const DUMMY: UtxoRecord = UtxoRecord { txid: [0; 32], vout: 0, amount: 0, height: 0, pkh: [0; 20] };

    pub fn new(txid: [u8; 32], vout: u32, amount: u64, height: u32, pkh: [u8; 20]) -> Result<Self, UtxoError> {
        if amount > MAX_MONEY {
            return Err(UtxoError::AmountOutOfRange(amount));
        }
        Ok(UtxoRecord { txid, vout, amount, height, pkh })
    }

    /// Dummies are recognized by an all-zero txid.
    pub fn is_dummy(&self) -> bool {
        self.txid == [0u8; 32]
    }

    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut b = [0u8; RECORD_LEN];
        b[..32].copy_from_slice(&self.txid);
        b[32..36].copy_from_slice(&self.vout.to_be_bytes());
        b[36..44].copy_from_slice(&self.amount.to_be_bytes());
        b[44..48].copy_from_slice(&self.height.to_be_bytes());
        b[48..68].copy_from_slice(&self.pkh);
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, UtxoError> {
        if b.len() != RECORD_LEN {
            return Err(UtxoError::MalformedPayload(format!("record is {} bytes", b.len())));
        }
        let amount = u64::from_be_bytes(b[36..44].try_into().unwrap());
        if amount > MAX_MONEY {
            return Err(UtxoError::AmountOutOfRange(amount));
        }
        Ok(UtxoRecord {
            txid: b[..32].try_into().unwrap(),
            vout: u32::from_be_bytes(b[32..36].try_into().unwrap()),
            amount,
            height: u32::from_be_bytes(b[44..48].try_into().unwrap()),
            pkh: b[48..68].try_into().unwrap(),
        })
    }

    /// Txid as Bitcoin tools display it (byte-reversed hex).
    pub fn txid_display(&self) -> String {
        let mut t = self.txid;
        t.reverse();
        hex::encode(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_layout() {
        let r = UtxoRecord::new([0xaa; 32], 0x01020304, 5_000_000_000, 700_000, [0xbb; 20]).unwrap();
        let b = r.to_bytes();
        assert_eq!(b.len(), 68);
        assert_eq!(&b[32..36], &[1, 2, 3, 4]);
        assert_eq!(&b[36..44], &5_000_000_000u64.to_be_bytes());
        assert_eq!(&b[44..48], &700_000u32.to_be_bytes());
        assert_eq!(UtxoRecord::from_bytes(&b).unwrap(), r);
        assert_eq!(UtxoRecord::DUMMY.to_bytes(), [0u8; 68]);
        assert!(UtxoRecord::DUMMY.is_dummy());
    }

    #[test]
    fn amount_cap() {
        assert!(UtxoRecord::new([1; 32], 0, MAX_MONEY, 0, [0; 20]).is_ok());
        assert!(UtxoRecord::new([1; 32], 0, MAX_MONEY + 1, 0, [0; 20]).is_err());
        let mut b = UtxoRecord::new([1; 32], 0, 1, 0, [0; 20]).unwrap().to_bytes();
        b[36..44].copy_from_slice(&u64::MAX.to_be_bytes());
        assert!(UtxoRecord::from_bytes(&b).is_err());
    }
}
