use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;

use k256::ecdsa::SigningKey;

use super::wire::{plain_body, read_unit, write_plain, Message, MAX_HEADERS_PER_RESP};
use super::ServiceError;
use crate::chain::{BlockHeader, BlockSource, ChainError, HeaderChain, HEADER_LEN};
use crate::crypto::{hash160_with, Hash160Mode, Hash32};
use crate::enclave::ownership::sign_ownership;
use crate::enclave::{ClientHandshake, OwnershipProof, Session};
use crate::store::ReadResponse;

/// An attested connection to a server.
pub struct Client {
    stream: TcpStream,
    session: Session,
    last_frame_len: usize,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("session", &self.session).finish()
    }
}

impl Client {
    /// Connects, attests the server against `root_key` and the expected
    /// measurement, and establishes the session.
    pub fn connect<A: ToSocketAddrs>(addr: A, root_key: &[u8], expected_measurement: &Hash32) -> Result<Self, ServiceError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let hs = ClientHandshake::start(&mut rand::thread_rng());
        write_plain(&mut stream, &Message::AttestReq(hs.request().clone()))?;
        let unit = read_unit(&mut stream)?.ok_or_else(|| ServiceError::Protocol("closed during attestation".into()))?;
        let session = match Message::decode(plain_body(&unit))? {
            Message::AttestResp(quote) => hs.finish(&quote, root_key, expected_measurement)?,
            Message::Error(code) => return Err(ServiceError::Remote(code)),
            other => return Err(ServiceError::Protocol(format!("expected ATTEST_RESP, got {:#04x}", other.msg_type()))),
        };
        Ok(Client { stream, session, last_frame_len: 0 })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Nonce ownership signatures must cover.
    pub fn binding_nonce(&self) -> [u8; 32] {
        *self.session.binding_nonce()
    }

    /// Wire length of the last frame received.
    pub fn last_frame_len(&self) -> usize {
        self.last_frame_len
    }

    /// Seals `msg` into the next outgoing frame without sending it.
    pub fn seal(&mut self, msg: &Message) -> Vec<u8> {
        self.session.seal(&msg.encode())
    }

    /// Seals arbitrary plaintext, for probing the server with bad messages.
    pub fn seal_bytes(&mut self, plaintext: &[u8]) -> Vec<u8> {
        self.session.seal(plaintext)
    }

    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ServiceError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, ServiceError> {
        let unit = read_unit(&mut self.stream)?.ok_or_else(|| ServiceError::Protocol("connection closed".into()))?;
        self.last_frame_len = unit.len();
        let pt = self.session.unseal(&unit)?;
        Ok(Message::decode(&pt)?)
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, ServiceError> {
        let frame = self.seal(msg);
        self.send_raw(&frame)?;
        self.recv()
    }

    pub fn query(&mut self, proof: OwnershipProof, delta: Option<u8>) -> Result<ReadResponse, ServiceError> {
        match self.request(&Message::Query { delta: delta.unwrap_or(0), proof })? {
            Message::QueryResp { interval, records } => Ok(ReadResponse { interval, records }),
            Message::Error(code) => Err(ServiceError::Remote(code)),
            other => Err(ServiceError::Protocol(format!("expected QUERY_RESP, got {:#04x}", other.msg_type()))),
        }
    }

    pub fn headers(&mut self, start: u32, count: u32) -> Result<Vec<BlockHeader>, ServiceError> {
        match self.request(&Message::HeadersReq { start, count })? {
            Message::HeadersResp { headers } => Ok(headers),
            Message::Error(code) => Err(ServiceError::Remote(code)),
            other => Err(ServiceError::Protocol(format!("expected HEADERS_RESP, got {:#04x}", other.msg_type()))),
        }
    }
}

/// One keyfile line: `hex pubkey[,hex privkey]`.
#[derive(Clone)]
pub struct KeyEntry {
    pub pubkey: Vec<u8>,
    pub signing: Option<SigningKey>,
}

impl std::fmt::Debug for KeyEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyEntry").field("pubkey", &hex::encode(&self.pubkey)).finish()
    }
}

pub fn parse_keyfile(text: &str) -> Result<Vec<KeyEntry>, ServiceError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || ServiceError::Config(format!("keyfile line {}: expected hex pubkey[,hex privkey]", n + 1));
        let mut parts = line.split(',');
        let pubkey = hex::decode(parts.next().unwrap().trim()).map_err(|_| bad())?;
        let signing = match parts.next() {
            Some(sk) => {
                let raw = hex::decode(sk.trim()).map_err(|_| bad())?;
                Some(SigningKey::from_slice(&raw).map_err(|_| bad())?)
            }
            None => None,
        };
        if parts.next().is_some() || pubkey.is_empty() {
            return Err(bad());
        }
        out.push(KeyEntry { pubkey, signing });
    }
    Ok(out)
}

/// Proof for `pkh` from the first key whose hash160 matches, signed when a
/// private key is available. With no matching key, the first key is used so
/// the server rejects the query.
pub fn proof_for(keys: &[KeyEntry], pkh: &[u8; 20], mode: Hash160Mode, binding_nonce: &[u8; 32]) -> Option<OwnershipProof> {
    let entry = keys.iter().find(|k| &hash160_with(mode, &k.pubkey) == pkh).or(keys.first())?;
    Some(OwnershipProof {
        pkh: *pkh,
        pubkey: entry.pubkey.clone(),
        signature: entry.signing.as_ref().map(|sk| sign_ownership(sk, pkh, binding_nonce)),
    })
}

/// Fixed key for the client's local header file; the tag guards against
/// corruption, not against a local adversary.
pub const CLIENT_HEADERS_KEY: &[u8] = b"t3-client-headers";

/// Pulls headers past the local tip from the server, verifying each.
pub fn sync_headers_from_server(client: &mut Client, chain: &mut HeaderChain) -> Result<u32, ServiceError> {
    let mut added = 0;
    loop {
        let start = chain.tip_height().map_or(0, |h| h + 1);
        let batch = client.headers(start, MAX_HEADERS_PER_RESP)?;
        if batch.is_empty() {
            return Ok(added);
        }
        for h in batch {
            chain.append(h).map_err(|e| ServiceError::Block { height: start + added, source: e })?;
            added += 1;
        }
    }
}

/// Pulls headers from a block directory, or from a file of concatenated
/// 80-byte headers.
pub fn sync_headers_from_path(path: &Path, chain: &mut HeaderChain) -> Result<u32, ServiceError> {
    let mut added = 0;
    if path.is_dir() {
        let src = crate::chain::DirBlockSource::new(path);
        loop {
            let height = chain.tip_height().map_or(0, |h| h + 1);
            let Some(block) = src.block_at(height)? else {
                return Ok(added);
            };
            chain.append(block.header).map_err(|e| ServiceError::Block { height, source: e })?;
            added += 1;
        }
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() % HEADER_LEN != 0 {
        return Err(ChainError::BadEncoding("header file is not a multiple of 80 bytes".into()).into());
    }
    let skip = chain.len();
    for (i, raw) in bytes.chunks_exact(HEADER_LEN).enumerate().skip(skip) {
        let h = BlockHeader::from_bytes(raw)?;
        chain.append(h).map_err(|e| ServiceError::Block { height: i as u32, source: e })?;
        added += 1;
    }
    Ok(added)
}
