/// `bid` carried by every dummy block.
pub const DUMMY_BID: u32 = u32::MAX;

/// Bytes of `bid ‖ leaf` preceding the payload in a block's plaintext.
pub const BLOCK_HEADER_LEN: usize = 8;

/// A logical block. Dummies have `bid == DUMMY_BID`, leaf 0 and an all-zero
/// payload, and serialize to the same length as real blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OramBlock {
    pub bid: u32,
    pub leaf: u32,
    pub payload: Box<[u8]>,
}

impl OramBlock {
    pub fn dummy(payload_bytes: usize) -> Self {
        OramBlock {
            bid: DUMMY_BID,
            leaf: 0,
            payload: vec![0u8; payload_bytes].into_boxed_slice(),
        }
    }

    pub fn new(bid: u32, leaf: u32, payload: Box<[u8]>) -> Self {
        debug_assert_ne!(bid, DUMMY_BID);
        OramBlock { bid, leaf, payload }
    }

    #[inline]
    pub fn is_dummy(&self) -> bool {
        self.bid == DUMMY_BID
    }

    pub fn encoded_len(payload_bytes: usize) -> usize {
        BLOCK_HEADER_LEN + payload_bytes
    }

    pub fn encode_into(&self, out: &mut [u8]) {
        out[..4].copy_from_slice(&self.bid.to_be_bytes());
        out[4..8].copy_from_slice(&self.leaf.to_be_bytes());
        out[8..8 + self.payload.len()].copy_from_slice(&self.payload);
    }

    pub fn decode(bytes: &[u8]) -> Self {
        let bid = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let leaf = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        OramBlock {
            bid,
            leaf,
            payload: bytes[8..].to_vec().into_boxed_slice(),
        }
    }
}
