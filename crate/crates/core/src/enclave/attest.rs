//! Simulated attestation and key exchange.
//!
//! SIMULATION ONLY: the "quote" is an HMAC under a locally configured
//! attestation root key, standing in for a hardware-signed report. It proves
//! nothing about real hardware; it binds the server's build measurement and
//! its ephemeral key-exchange share to the client's nonce.
//!
//! The exchange is ephemeral Diffie-Hellman over ristretto255 (a prime-order
//! group). Both shares and the nonce feed the session key derivation.

use std::collections::HashSet;
use std::sync::Mutex;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{CryptoRng, RngCore};

use super::channel::{Role, Session};
use super::EnclaveError;
use crate::crypto::{derive_key, hmac_sha256, hmac_verify, sha256, Hash32, KEY_LEN};

pub const NONCE_LEN: usize = 32;
pub const PUBLIC_LEN: usize = 32;
pub const QUOTE_LEN: usize = 32 + PUBLIC_LEN + 32;

/// Measurement of a build identity string.
pub fn measure(identity: &str) -> Hash32 {
    sha256(identity.as_bytes())
}

/// Identity of this server build; the default measured value.
pub const BUILD_IDENTITY: &str = concat!("t3-enclave/", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttestationQuote {
    pub enclave_measurement: Hash32,
    pub dh_public: [u8; PUBLIC_LEN],
    pub quote_mac: Hash32,
}

impl AttestationQuote {
    pub fn to_bytes(&self) -> [u8; QUOTE_LEN] {
        let mut out = [0u8; QUOTE_LEN];
        out[..32].copy_from_slice(&self.enclave_measurement);
        out[32..64].copy_from_slice(&self.dh_public);
        out[64..].copy_from_slice(&self.quote_mac);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, EnclaveError> {
        if b.len() != QUOTE_LEN {
            return Err(EnclaveError::Malformed("quote length"));
        }
        Ok(AttestationQuote {
            enclave_measurement: b[..32].try_into().unwrap(),
            dh_public: b[32..64].try_into().unwrap(),
            quote_mac: b[64..].try_into().unwrap(),
        })
    }

    /// Checks the MAC against the exact (measurement, share, nonce) triple.
    pub fn verify(&self, root_key: &[u8], client_nonce: &[u8; NONCE_LEN]) -> bool {
        hmac_verify(
            root_key,
            &[&self.enclave_measurement, &self.dh_public, client_nonce],
            &self.quote_mac,
        )
    }
}

/// An ephemeral key-exchange share.
pub struct EphemeralKey {
    secret: Scalar,
    public: [u8; PUBLIC_LEN],
}

impl EphemeralKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = Scalar::random(rng);
        let public = RistrettoPoint::mul_base(&secret).compress().to_bytes();
        EphemeralKey { secret, public }
    }

    pub fn public(&self) -> [u8; PUBLIC_LEN] {
        self.public
    }

    fn shared(&self, peer: &[u8; PUBLIC_LEN]) -> Result<[u8; 32], EnclaveError> {
        let point = CompressedRistretto(*peer)
            .decompress()
            .ok_or(EnclaveError::Malformed("key share is not a group element"))?;
        if point == RistrettoPoint::default() {
            return Err(EnclaveError::Malformed("identity key share"));
        }
        Ok((self.secret * point).compress().to_bytes())
    }
}

fn session_key(
    shared: &[u8; 32],
    nonce: &[u8; NONCE_LEN],
    measurement: &Hash32,
    client_pub: &[u8; PUBLIC_LEN],
    server_pub: &[u8; PUBLIC_LEN],
) -> [u8; KEY_LEN] {
    let mut info = Vec::with_capacity(96 + 8);
    info.extend_from_slice(b"t3-sess");
    info.extend_from_slice(measurement);
    info.extend_from_slice(client_pub);
    info.extend_from_slice(server_pub);
    derive_key(shared, nonce, &info)
}

/// Client's first message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttestRequest {
    pub client_nonce: [u8; NONCE_LEN],
    pub client_public: [u8; PUBLIC_LEN],
}

impl AttestRequest {
    pub fn to_bytes(&self) -> [u8; NONCE_LEN + PUBLIC_LEN] {
        let mut out = [0u8; NONCE_LEN + PUBLIC_LEN];
        out[..NONCE_LEN].copy_from_slice(&self.client_nonce);
        out[NONCE_LEN..].copy_from_slice(&self.client_public);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, EnclaveError> {
        if b.len() != NONCE_LEN + PUBLIC_LEN {
            return Err(EnclaveError::Malformed("attest request length"));
        }
        Ok(AttestRequest {
            client_nonce: b[..NONCE_LEN].try_into().unwrap(),
            client_public: b[NONCE_LEN..].try_into().unwrap(),
        })
    }
}

/// Client half of an in-progress handshake.
pub struct ClientHandshake {
    key: EphemeralKey,
    request: AttestRequest,
}

impl ClientHandshake {
    pub fn start<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let key = EphemeralKey::generate(rng);
        let mut client_nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut client_nonce);
        let request = AttestRequest { client_nonce, client_public: key.public() };
        ClientHandshake { key, request }
    }

    pub fn request(&self) -> &AttestRequest {
        &self.request
    }

    /// Verifies the quote against the root key and the expected measurement,
    /// then derives the client session.
    pub fn finish(
        self,
        quote: &AttestationQuote,
        root_key: &[u8],
        expected_measurement: &Hash32,
    ) -> Result<Session, EnclaveError> {
        if !quote.verify(root_key, &self.request.client_nonce) {
            return Err(EnclaveError::QuoteInvalid);
        }
        if &quote.enclave_measurement != expected_measurement {
            return Err(EnclaveError::QuoteInvalid);
        }
        let shared = self.key.shared(&quote.dh_public)?;
        let key = session_key(
            &shared,
            &self.request.client_nonce,
            &quote.enclave_measurement,
            &self.request.client_public,
            &quote.dh_public,
        );
        Ok(Session::new(Role::Client, key, self.request.client_nonce))
    }
}

/// Server-side attestation endpoint. Stateless apart from the set of nonces
/// already answered, so it can be shared across connections.
pub struct Attestor {
    root_key: Vec<u8>,
    measurement: Hash32,
    seen_nonces: Mutex<HashSet<[u8; NONCE_LEN]>>,
}

impl Attestor {
    pub fn new(root_key: Vec<u8>, measurement: Hash32) -> Self {
        Attestor { root_key, measurement, seen_nonces: Mutex::new(HashSet::new()) }
    }

    pub fn measurement(&self) -> Hash32 {
        self.measurement
    }

    /// Answers an attestation request with a quote and the server session.
    pub fn attest<R: RngCore + CryptoRng>(
        &self,
        req: &AttestRequest,
        rng: &mut R,
    ) -> Result<(AttestationQuote, Session), EnclaveError> {
        if !self.seen_nonces.lock().unwrap().insert(req.client_nonce) {
            return Err(EnclaveError::StaleNonce);
        }
        let eph = EphemeralKey::generate(rng);
        let shared = eph.shared(&req.client_public)?;
        let quote_mac = hmac_sha256(&self.root_key, &[&self.measurement, &eph.public(), &req.client_nonce]);
        let quote = AttestationQuote { enclave_measurement: self.measurement, dh_public: eph.public(), quote_mac };
        let key = session_key(&shared, &req.client_nonce, &self.measurement, &req.client_public, &eph.public());
        Ok((quote, Session::new(Role::Server, key, req.client_nonce)))
    }
}

/// Parses a hex attestation root key, as carried in `T3_ATTEST_ROOT`.
pub fn parse_root_key(hex_str: &str) -> Result<Vec<u8>, EnclaveError> {
    let key = hex::decode(hex_str.trim()).map_err(|_| EnclaveError::Malformed("attestation root is not hex"))?;
    if key.len() < 16 {
        return Err(EnclaveError::Malformed("attestation root shorter than 16 bytes"));
    }
    Ok(key)
}
