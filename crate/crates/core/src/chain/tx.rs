use super::wire::{put_var_bytes, put_varint, Reader};
use super::{bad, ChainError};
use crate::crypto::{sha256d, Hash32};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OutPoint {
    pub txid: Hash32,
    pub vout: u32,
}

impl OutPoint {
    pub const NULL: OutPoint = OutPoint { txid: [0; 32], vout: u32::MAX };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxIn {
    pub prevout: OutPoint,
    pub script_sig: Vec<u8>,
    pub sequence: u32,
    /// Parsed past but never interpreted.
    pub witness: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxOut {
    pub value: u64,
    pub script_pubkey: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub version: u32,
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    pub lock_time: u32,
}

impl Transaction {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.len() == 1 && self.inputs[0].prevout == OutPoint::NULL
    }

    pub fn has_witness(&self) -> bool {
        self.inputs.iter().any(|i| !i.witness.is_empty())
    }

    /// Legacy serialization (no marker, no witnesses), which is what the txid commits to.
    pub fn encode_legacy(&self) -> Vec<u8> {
        self.encode_inner(false)
    }

    pub fn encode(&self) -> Vec<u8> {
        self.encode_inner(self.has_witness())
    }

    fn encode_inner(&self, witness: bool) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.version.to_le_bytes());
        if witness {
            out.extend_from_slice(&[0x00, 0x01]);
        }
        put_varint(&mut out, self.inputs.len() as u64);
        for i in &self.inputs {
            out.extend_from_slice(&i.prevout.txid);
            out.extend_from_slice(&i.prevout.vout.to_le_bytes());
            put_var_bytes(&mut out, &i.script_sig);
            out.extend_from_slice(&i.sequence.to_le_bytes());
        }
        put_varint(&mut out, self.outputs.len() as u64);
        for o in &self.outputs {
            out.extend_from_slice(&o.value.to_le_bytes());
            put_var_bytes(&mut out, &o.script_pubkey);
        }
        if witness {
            for i in &self.inputs {
                put_varint(&mut out, i.witness.len() as u64);
                for item in &i.witness {
                    put_var_bytes(&mut out, item);
                }
            }
        }
        out.extend_from_slice(&self.lock_time.to_le_bytes());
        out
    }

    pub fn txid(&self) -> Hash32 {
        sha256d(&self.encode_legacy())
    }

    pub fn decode(b: &[u8]) -> Result<Self, ChainError> {
        let mut r = Reader::new(b);
        let tx = Self::read(&mut r)?;
        if r.remaining() != 0 {
            return Err(bad("trailing bytes after transaction"));
        }
        Ok(tx)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, ChainError> {
        let version = r.u32_le()?;
        let segwit = r.peek(2) == Some(&[0x00, 0x01]);
        if segwit {
            r.bytes(2)?;
        }
        let n_in = r.count(41)?;
        if n_in == 0 {
            return Err(bad("transaction without inputs"));
        }
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let txid = r.array()?;
            let vout = r.u32_le()?;
            let script_sig = r.var_bytes()?.to_vec();
            let sequence = r.u32_le()?;
            inputs.push(TxIn { prevout: OutPoint { txid, vout }, script_sig, sequence, witness: Vec::new() });
        }
        let n_out = r.count(9)?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let value = r.u64_le()?;
            let script_pubkey = r.var_bytes()?.to_vec();
            outputs.push(TxOut { value, script_pubkey });
        }
        if segwit {
            for input in &mut inputs {
                let items = r.count(1)?;
                for _ in 0..items {
                    input.witness.push(r.var_bytes()?.to_vec());
                }
            }
        }
        let lock_time = r.u32_le()?;
        Ok(Transaction { version, inputs, outputs, lock_time })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Coinbase of the mainnet genesis block.
    const GENESIS_CB: &str = "01000000010000000000000000000000000000000000000000000000000000000000000000ffffffff4d04ffff001d0104455468652054696d65732030332f4a616e2f32303039204368616e63656c6c6f72206f6e206272696e6b206f66207365636f6e64206261696c6f757420666f722062616e6b73ffffffff0100f2052a01000000434104678afdb0fe5548271967f1a67130b7105cd6a828e03909a67962e0ea1f61deb649f6bc3f4cef38c4f35504e51ec112de5c384df7ba0b8d578a4c702b6bf11d5fac00000000";

    #[test]
    fn genesis_coinbase_txid() {
        let tx = Transaction::decode(&hex::decode(GENESIS_CB).unwrap()).unwrap();
        assert!(tx.is_coinbase());
        let mut id = tx.txid();
        id.reverse();
        assert_eq!(hex::encode(id), "4a5e1e4baab89f3a32518a88c31bc87f618f76673e2cc77ab2127b7afdeda33b");
        assert_eq!(hex::encode(tx.encode()), GENESIS_CB);
    }

    #[test]
    fn witness_is_skipped_for_txid() {
        let mut tx = Transaction {
            version: 2,
            inputs: vec![TxIn { prevout: OutPoint { txid: [3; 32], vout: 1 }, script_sig: vec![], sequence: 0, witness: vec![] }],
            outputs: vec![TxOut { value: 5, script_pubkey: vec![0x51] }],
            lock_time: 0,
        };
        let legacy_id = tx.txid();
        tx.inputs[0].witness = vec![vec![0xaa; 71], vec![0x02; 33]];
        let enc = tx.encode();
        assert_eq!(&enc[4..6], &[0, 1]);
        let back = Transaction::decode(&enc).unwrap();
        assert_eq!(back, tx);
        assert_eq!(back.txid(), legacy_id);
    }

    #[test]
    fn truncated_fails() {
        let raw = hex::decode(GENESIS_CB).unwrap();
        for cut in [0, 4, 10, 60, raw.len() - 1] {
            assert!(Transaction::decode(&raw[..cut]).is_err());
        }
    }
}
