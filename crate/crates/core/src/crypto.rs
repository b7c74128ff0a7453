//! Hashing, keyed hashing and authenticated encryption shared by every layer.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use hmac::{Hmac, Mac};
use ripemd::Ripemd160;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

pub type Hash32 = [u8; 32];

type HmacSha256 = Hmac<Sha256>;

pub fn sha256(data: &[u8]) -> Hash32 {
    Sha256::digest(data).into()
}

/// Bitcoin's double SHA-256.
pub fn sha256d(data: &[u8]) -> Hash32 {
    sha256(&sha256(data))
}

/// Which 20-byte digest backs `hash160`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hash160Mode {
    /// RIPEMD160(SHA256(x)), the Bitcoin address hash.
    #[default]
    Ripemd,
    /// First 20 bytes of SHA256(x).
    TruncatedSha256,
}

pub fn hash160_with(mode: Hash160Mode, data: &[u8]) -> [u8; 20] {
    let inner = sha256(data);
    let mut out = [0u8; 20];
    match mode {
        Hash160Mode::Ripemd => out.copy_from_slice(&Ripemd160::digest(inner)),
        Hash160Mode::TruncatedSha256 => out.copy_from_slice(&inner[..20]),
    }
    out
}

pub fn hash160(data: &[u8]) -> [u8; 20] {
    hash160_with(Hash160Mode::Ripemd, data)
}

pub fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> Hash32 {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Constant-time check of an HMAC tag.
pub fn hmac_verify(key: &[u8], parts: &[&[u8]], tag: &[u8]) -> bool {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.verify_slice(tag).is_ok()
}

/// HKDF-SHA256 expand into a 32-byte key.
pub fn derive_key(ikm: &[u8], salt: &[u8], info: &[u8]) -> [u8; KEY_LEN] {
    let hk = hkdf::Hkdf::<Sha256>::new(Some(salt), ikm);
    let mut okm = [0u8; KEY_LEN];
    hk.expand(info, &mut okm).expect("32 bytes is a valid HKDF length");
    okm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("authenticated decryption failed")]
pub struct AeadError;

/// ChaCha20-Poly1305 with detached tags, so callers control the on-disk layout.
#[derive(Clone)]
pub struct Aead {
    cipher: ChaCha20Poly1305,
}

impl std::fmt::Debug for Aead {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Aead(..)")
    }
}

impl Aead {
    pub fn new(key: &[u8; KEY_LEN]) -> Self {
        Aead {
            cipher: ChaCha20Poly1305::new(Key::from_slice(key)),
        }
    }

    /// Encrypts `buf` in place and returns the tag.
    pub fn seal_in_place(
        &self,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        buf: &mut [u8],
    ) -> [u8; TAG_LEN] {
        self.cipher
            .encrypt_in_place_detached(Nonce::from_slice(nonce), aad, buf)
            .expect("plaintext length within chacha20 limits")
            .into()
    }

    pub fn open_in_place(
        &self,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        buf: &mut [u8],
        tag: &[u8],
    ) -> Result<(), AeadError> {
        if tag.len() != TAG_LEN {
            return Err(AeadError);
        }
        self.cipher
            .decrypt_in_place_detached(Nonce::from_slice(nonce), aad, buf, Tag::from_slice(tag))
            .map_err(|_| AeadError)
    }

    /// `nonce ‖ ciphertext ‖ tag` with a random nonce.
    pub fn seal_random<R: rand::RngCore + ?Sized>(
        &self,
        rng: &mut R,
        aad: &[u8],
        plaintext: &[u8],
    ) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let mut out = Vec::with_capacity(NONCE_LEN + plaintext.len() + TAG_LEN);
        out.extend_from_slice(&nonce);
        out.extend_from_slice(plaintext);
        let tag = self.seal_in_place(&nonce, aad, &mut out[NONCE_LEN..]);
        out.extend_from_slice(&tag);
        out
    }

    pub fn open_random(&self, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, AeadError> {
        if sealed.len() < NONCE_LEN + TAG_LEN {
            return Err(AeadError);
        }
        let (nonce, rest) = sealed.split_at(NONCE_LEN);
        let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
        let mut buf = ct.to_vec();
        let nonce: [u8; NONCE_LEN] = nonce.try_into().unwrap();
        self.open_in_place(&nonce, aad, &mut buf, tag)?;
        Ok(buf)
    }
}
