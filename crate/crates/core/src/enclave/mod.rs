//! Software stand-in for the trusted execution boundary: attestation with key
//! exchange, sealed channel frames, sealed storage, constant-trace selection
//! and address-ownership checks. None of this is hardware-backed.

pub mod attest;
pub mod channel;
pub mod oblivious;
pub mod ownership;
pub mod sealing;

pub use attest::{AttestRequest, AttestationQuote, Attestor, ClientHandshake};
pub use channel::{Role, Session};
pub use ownership::{OwnershipProof, OwnershipVerifier, ProofMode};
pub use sealing::SealingKey;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnclaveError {
    #[error("attestation quote failed verification")]
    QuoteInvalid,
    #[error("attestation nonce already used")]
    StaleNonce,
    #[error("frame failed authentication")]
    AuthFail,
    #[error("replayed frame")]
    ReplayDetected,
    #[error("frame arrived out of order")]
    Reordered,
    #[error("sealed blob failed to open")]
    SealBroken,
    #[error("malformed input: {0}")]
    Malformed(&'static str),
}
