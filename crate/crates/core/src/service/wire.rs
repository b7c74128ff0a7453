//! Message encoding.
//!
//! Before attestation completes, messages travel as `len: u32 BE ‖ type ‖
//! body`. Afterwards every message is a sealed channel frame whose plaintext
//! is `type ‖ body`.

use std::io::{Read, Write};

use crate::chain::{BlockHeader, HEADER_LEN};
use crate::enclave::attest::{AttestationQuote, QUOTE_LEN};
use crate::enclave::channel::MAX_FRAME_LEN;
use crate::enclave::{AttestRequest, OwnershipProof};
use crate::utxo::{UtxoRecord, RECORD_LEN};

pub const ATTEST_REQ: u8 = 0x01;
pub const ATTEST_RESP: u8 = 0x02;
pub const QUERY: u8 = 0x10;
pub const QUERY_RESP: u8 = 0x11;
pub const HEADERS_REQ: u8 = 0x20;
pub const HEADERS_RESP: u8 = 0x21;
pub const ERROR: u8 = 0x7F;

/// Most headers returned by one HEADERS_RESP.
pub const MAX_HEADERS_PER_RESP: u32 = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    BadEncoding = 1,
    BadProof = 2,
    Unavailable = 3,
    DuplicateRead = 4,
    AuthFail = 5,
    ReplayDetected = 6,
    Reordered = 7,
    IntegrityViolation = 8,
    BadDelta = 9,
    Internal = 10,
    Unexpected = 11,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        use ErrorCode::*;
        Some(match v {
            1 => BadEncoding,
            2 => BadProof,
            3 => Unavailable,
            4 => DuplicateRead,
            5 => AuthFail,
            6 => ReplayDetected,
            7 => Reordered,
            8 => IntegrityViolation,
            9 => BadDelta,
            10 => Internal,
            11 => Unexpected,
            _ => return None,
        })
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    AttestReq(AttestRequest),
    AttestResp(AttestationQuote),
    /// `delta` 0 means the server default.
    Query { delta: u8, proof: OwnershipProof },
    QueryResp { interval: u64, records: Vec<UtxoRecord> },
    HeadersReq { start: u32, count: u32 },
    HeadersResp { headers: Vec<BlockHeader> },
    Error(ErrorCode),
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::AttestReq(_) => ATTEST_REQ,
            Message::AttestResp(_) => ATTEST_RESP,
            Message::Query { .. } => QUERY,
            Message::QueryResp { .. } => QUERY_RESP,
            Message::HeadersReq { .. } => HEADERS_REQ,
            Message::HeadersResp { .. } => HEADERS_RESP,
            Message::Error(_) => ERROR,
        }
    }

    /// `type ‖ body`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.msg_type()];
        match self {
            Message::AttestReq(r) => out.extend_from_slice(&r.to_bytes()),
            Message::AttestResp(q) => out.extend_from_slice(&q.to_bytes()),
            Message::Query { delta, proof } => {
                out.push(*delta);
                out.extend_from_slice(&proof.encode());
            }
            Message::QueryResp { interval, records } => {
                out.extend_from_slice(&interval.to_be_bytes());
                out.extend_from_slice(&(records.len() as u16).to_be_bytes());
                for r in records {
                    out.extend_from_slice(&r.to_bytes());
                }
            }
            Message::HeadersReq { start, count } => {
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&count.to_be_bytes());
            }
            Message::HeadersResp { headers } => {
                out.extend_from_slice(&(headers.len() as u32).to_be_bytes());
                for h in headers {
                    out.extend_from_slice(&h.to_bytes());
                }
            }
            Message::Error(code) => out.extend_from_slice(&(*code as u16).to_be_bytes()),
        }
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        let (&ty, body) = b.split_first().ok_or(WireError::Malformed("empty message"))?;
        let exact = |n: usize| {
            if body.len() == n {
                Ok(())
            } else {
                Err(WireError::Malformed("wrong body length"))
            }
        };
        Ok(match ty {
            ATTEST_REQ => Message::AttestReq(
                AttestRequest::from_bytes(body).map_err(|_| WireError::Malformed("attest request"))?,
            ),
            ATTEST_RESP => {
                exact(QUOTE_LEN)?;
                Message::AttestResp(AttestationQuote::from_bytes(body).map_err(|_| WireError::Malformed("quote"))?)
            }
            QUERY => {
                let (&delta, rest) = body.split_first().ok_or(WireError::Malformed("query"))?;
                let (proof, rest) = OwnershipProof::decode(rest).map_err(|_| WireError::Malformed("ownership proof"))?;
                if !rest.is_empty() {
                    return Err(WireError::Malformed("trailing bytes in query"));
                }
                Message::Query { delta, proof }
            }
            QUERY_RESP => {
                if body.len() < 10 {
                    return Err(WireError::Malformed("query response"));
                }
                let interval = u64::from_be_bytes(body[..8].try_into().unwrap());
                let n = u16::from_be_bytes(body[8..10].try_into().unwrap()) as usize;
                exact(10 + n * RECORD_LEN)?;
                let records = body[10..]
                    .chunks_exact(RECORD_LEN)
                    .map(UtxoRecord::from_bytes)
                    .collect::<Result<_, _>>()
                    .map_err(|_| WireError::Malformed("record"))?;
                Message::QueryResp { interval, records }
            }
            HEADERS_REQ => {
                exact(8)?;
                Message::HeadersReq {
                    start: u32::from_be_bytes(body[..4].try_into().unwrap()),
                    count: u32::from_be_bytes(body[4..].try_into().unwrap()),
                }
            }
            HEADERS_RESP => {
                if body.len() < 4 {
                    return Err(WireError::Malformed("headers response"));
                }
                let n = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
                exact(4 + n.checked_mul(HEADER_LEN).ok_or(WireError::Malformed("header count"))?)?;
                let headers = body[4..]
                    .chunks_exact(HEADER_LEN)
                    .map(BlockHeader::from_bytes)
                    .collect::<Result<_, _>>()
                    .map_err(|_| WireError::Malformed("header"))?;
                Message::HeadersResp { headers }
            }
            ERROR => {
                exact(2)?;
                let code = u16::from_be_bytes(body.try_into().unwrap());
                Message::Error(ErrorCode::from_u16(code).ok_or(WireError::Malformed("error code"))?)
            }
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

/// Reads one length-prefixed unit and returns it whole (prefix included).
/// `Ok(None)` on clean EOF before the prefix.
pub fn read_unit<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_LEN {
        return Err(WireError::Malformed("unit too long"));
    }
    let mut buf = vec![0u8; 4 + n];
    buf[..4].copy_from_slice(&len);
    r.read_exact(&mut buf[4..])?;
    Ok(Some(buf))
}

/// Writes a plaintext (pre-attestation) message.
pub fn write_plain<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    let body = msg.encode();
    let mut out = (body.len() as u32).to_be_bytes().to_vec();
    out.extend_from_slice(&body);
    w.write_all(&out)?;
    w.flush()?;
    Ok(())
}

/// Body of a plaintext unit read by `read_unit`.
pub fn plain_body(unit: &[u8]) -> &[u8] {
    &unit[4..]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let msgs = vec![
            Message::AttestReq(AttestRequest { client_nonce: [1; 32], client_public: [2; 32] }),
            Message::AttestResp(AttestationQuote { enclave_measurement: [1; 32], dh_public: [2; 32], quote_mac: [3; 32] }),
            Message::Query { delta: 2, proof: OwnershipProof::preimage([4; 20], vec![2; 33]) },
            Message::QueryResp {
                interval: 9,
                records: vec![UtxoRecord::DUMMY, UtxoRecord::new([1; 32], 2, 3, 4, [5; 20]).unwrap()],
            },
            Message::HeadersReq { start: 1, count: 5 },
            Message::HeadersResp {
                headers: vec![BlockHeader { version: 1, prev_hash: [0; 32], merkle_root: [1; 32], time: 2, bits: 3, nonce: 4 }],
            },
            Message::Error(ErrorCode::BadProof),
        ];
        for m in msgs {
            assert_eq!(Message::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn error_frames_are_fixed_size() {
        let sizes: Vec<usize> = (1..=11).map(|c| Message::Error(ErrorCode::from_u16(c).unwrap()).encode().len()).collect();
        assert!(sizes.iter().all(|&s| s == 3));
    }

    #[test]
    fn malformed_rejected() {
        assert!(Message::decode(&[]).is_err());
        assert!(matches!(Message::decode(&[0x55]), Err(WireError::UnknownType(0x55))));
        assert!(Message::decode(&[QUERY_RESP, 0, 0]).is_err());
        assert!(Message::decode(&[ERROR, 0, 99]).is_err());
        let mut q = Message::Query { delta: 0, proof: OwnershipProof::preimage([4; 20], vec![2; 33]) }.encode();
        q.push(0);
        assert!(Message::decode(&q).is_err());
    }

    #[test]
    fn unit_reader() {
        let mut buf = Vec::new();
        write_plain(&mut buf, &Message::Error(ErrorCode::Internal)).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        let unit = read_unit(&mut cur).unwrap().unwrap();
        assert_eq!(Message::decode(plain_body(&unit)).unwrap(), Message::Error(ErrorCode::Internal));
        assert!(read_unit(&mut cur).unwrap().is_none());
    }
}
