//! Proof that a client controls an address.
//!
//! Preimage mode accepts any public key whose hash160 equals the queried pkh.
//! Signature mode additionally requires a signature over the pkh and the
//! session's binding nonce; the scheme is pluggable and secp256k1 ECDSA is
//! provided.

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use super::channel::Session;
use super::EnclaveError;
use crate::crypto::{hash160_with, Hash160Mode};

pub const PKH_LEN: usize = 20;
const SIGN_DOMAIN: &[u8] = b"t3-ownership";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnershipProof {
    pub pkh: [u8; PKH_LEN],
    pub pubkey: Vec<u8>,
    pub signature: Option<Vec<u8>>,
}

impl OwnershipProof {
    pub fn preimage(pkh: [u8; PKH_LEN], pubkey: Vec<u8>) -> Self {
        OwnershipProof { pkh, pubkey, signature: None }
    }

    /// `pkh ‖ kind ‖ len ‖ pubkey ‖ len ‖ signature`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PKH_LEN + 3 + self.pubkey.len() + 72);
        out.extend_from_slice(&self.pkh);
        out.push(self.signature.is_some() as u8);
        out.push(self.pubkey.len() as u8);
        out.extend_from_slice(&self.pubkey);
        let sig = self.signature.as_deref().unwrap_or(&[]);
        out.push(sig.len() as u8);
        out.extend_from_slice(sig);
        out
    }

    /// Decodes a proof and returns the unread remainder.
    pub fn decode(b: &[u8]) -> Result<(Self, &[u8]), EnclaveError> {
        let malformed = EnclaveError::Malformed("ownership proof");
        if b.len() < PKH_LEN + 3 {
            return Err(malformed);
        }
        let pkh: [u8; PKH_LEN] = b[..PKH_LEN].try_into().unwrap();
        let kind = b[PKH_LEN];
        if kind > 1 {
            return Err(malformed);
        }
        let pk_len = b[PKH_LEN + 1] as usize;
        let rest = &b[PKH_LEN + 2..];
        if rest.len() < pk_len + 1 {
            return Err(malformed);
        }
        let pubkey = rest[..pk_len].to_vec();
        let sig_len = rest[pk_len] as usize;
        let rest = &rest[pk_len + 1..];
        if rest.len() < sig_len || (kind == 0) != (sig_len == 0) {
            return Err(malformed);
        }
        let signature = (kind == 1).then(|| rest[..sig_len].to_vec());
        Ok((OwnershipProof { pkh, pubkey, signature }, &rest[sig_len..]))
    }
}

pub trait SignatureScheme: Send + Sync {
    fn verify(&self, pubkey: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

/// secp256k1 ECDSA over SHA-256, 64-byte compact signatures.
#[derive(Clone, Copy, Debug, Default)]
pub struct Secp256k1Ecdsa;

impl SignatureScheme for Secp256k1Ecdsa {
    fn verify(&self, pubkey: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let Ok(vk) = VerifyingKey::from_sec1_bytes(pubkey) else {
            return false;
        };
        let Ok(sig) = Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(message, &sig).is_ok()
    }
}

/// Message signed in signature mode.
pub fn ownership_message(pkh: &[u8; PKH_LEN], binding_nonce: &[u8; 32]) -> Vec<u8> {
    [SIGN_DOMAIN, pkh, binding_nonce].concat()
}

/// Client-side helper for signature mode.
pub fn sign_ownership(key: &SigningKey, pkh: &[u8; PKH_LEN], binding_nonce: &[u8; 32]) -> Vec<u8> {
    let sig: Signature = key.sign(&ownership_message(pkh, binding_nonce));
    sig.to_bytes().to_vec()
}

/// Compressed SEC1 public key for a signing key.
pub fn compressed_pubkey(key: &SigningKey) -> Vec<u8> {
    key.verifying_key().to_encoded_point(true).as_bytes().to_vec()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofMode {
    #[default]
    Preimage,
    Signature,
}

pub struct OwnershipVerifier {
    pub mode: ProofMode,
    pub hash_mode: Hash160Mode,
    scheme: Box<dyn SignatureScheme>,
}

impl Default for OwnershipVerifier {
    fn default() -> Self {
        Self::new(ProofMode::Preimage, Hash160Mode::Ripemd)
    }
}

impl OwnershipVerifier {
    pub fn new(mode: ProofMode, hash_mode: Hash160Mode) -> Self {
        Self::with_scheme(mode, hash_mode, Box::new(Secp256k1Ecdsa))
    }

    pub fn with_scheme(mode: ProofMode, hash_mode: Hash160Mode, scheme: Box<dyn SignatureScheme>) -> Self {
        OwnershipVerifier { mode, hash_mode, scheme }
    }

    /// True iff `hash160(pubkey) == pkh` (and the proof names that pkh), plus,
    /// in signature mode, a valid signature over the session's binding nonce.
    pub fn verify_ownership(&self, proof: &OwnershipProof, pkh: &[u8; PKH_LEN], session: &Session) -> bool {
        let digest = hash160_with(self.hash_mode, &proof.pubkey);
        let preimage_ok: bool = (digest.ct_eq(pkh) & proof.pkh.ct_eq(pkh)).into();
        match self.mode {
            ProofMode::Preimage => preimage_ok,
            ProofMode::Signature => {
                let Some(sig) = &proof.signature else {
                    return false;
                };
                let msg = ownership_message(pkh, session.binding_nonce());
                preimage_ok & self.scheme.verify(&proof.pubkey, &msg, sig)
            }
        }
    }
}
