//! Sealed frames over an attested session.
//!
//! Frame: `len: u32 BE ‖ counter: u64 BE ‖ ciphertext ‖ tag[16]`, where `len`
//! counts everything after itself. The AEAD nonce is a 4-byte direction label
//! followed by the counter, and `len ‖ counter` is authenticated as associated
//! data. Counters start at zero and must arrive in exact sequence.

use super::EnclaveError;
use crate::crypto::{sha256, Aead, KEY_LEN, NONCE_LEN, TAG_LEN};

pub const LEN_PREFIX: usize = 4;
pub const COUNTER_LEN: usize = 8;
/// Frame bytes on top of the plaintext.
pub const FRAME_OVERHEAD: usize = LEN_PREFIX + COUNTER_LEN + TAG_LEN;
pub const MAX_FRAME_LEN: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

impl Role {
    fn label(self) -> [u8; 4] {
        match self {
            Role::Client => *b"c2s\0",
            Role::Server => *b"s2c\0",
        }
    }

    fn peer(self) -> Role {
        match self {
            Role::Client => Role::Server,
            Role::Server => Role::Client,
        }
    }
}

pub struct Session {
    session_id: [u8; 16],
    shared_key: [u8; KEY_LEN],
    aead: Aead,
    send_counter: u64,
    recv_counter: u64,
    role: Role,
    binding_nonce: [u8; 32],
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &hex::encode(self.session_id))
            .field("role", &self.role)
            .field("send_counter", &self.send_counter)
            .field("recv_counter", &self.recv_counter)
            .finish()
    }
}

fn nonce_for(role: Role, counter: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[..4].copy_from_slice(&role.label());
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

impl Session {
    pub fn new(role: Role, shared_key: [u8; KEY_LEN], binding_nonce: [u8; 32]) -> Self {
        let id = sha256(&[&shared_key[..], b"session-id"].concat());
        Session {
            session_id: id[..16].try_into().unwrap(),
            shared_key,
            aead: Aead::new(&shared_key),
            send_counter: 0,
            recv_counter: 0,
            role,
            binding_nonce,
        }
    }

    pub fn session_id(&self) -> [u8; 16] {
        self.session_id
    }

    pub fn shared_key(&self) -> &[u8; KEY_LEN] {
        &self.shared_key
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Nonce both ends agreed on during attestation; ownership signatures
    /// are made over it.
    pub fn binding_nonce(&self) -> &[u8; 32] {
        &self.binding_nonce
    }

    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn recv_counter(&self) -> u64 {
        self.recv_counter
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Vec<u8> {
        let counter = self.send_counter;
        self.send_counter = counter.checked_add(1).expect("send counter exhausted");
        let body_len = COUNTER_LEN + plaintext.len() + TAG_LEN;
        let mut frame = Vec::with_capacity(LEN_PREFIX + body_len);
        frame.extend_from_slice(&(body_len as u32).to_be_bytes());
        frame.extend_from_slice(&counter.to_be_bytes());
        frame.extend_from_slice(plaintext);
        let aad: [u8; LEN_PREFIX + COUNTER_LEN] = frame[..LEN_PREFIX + COUNTER_LEN].try_into().unwrap();
        let tag = self.aead.seal_in_place(
            &nonce_for(self.role, counter),
            &aad,
            &mut frame[LEN_PREFIX + COUNTER_LEN..],
        );
        frame.extend_from_slice(&tag);
        frame
    }

    /// Opens a complete frame. The receive counter only advances on success.
    pub fn unseal(&mut self, frame: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        if frame.len() < FRAME_OVERHEAD {
            return Err(EnclaveError::AuthFail);
        }
        let declared = u32::from_be_bytes(frame[..LEN_PREFIX].try_into().unwrap()) as usize;
        if declared != frame.len() - LEN_PREFIX {
            return Err(EnclaveError::AuthFail);
        }
        let counter = u64::from_be_bytes(frame[LEN_PREFIX..LEN_PREFIX + COUNTER_LEN].try_into().unwrap());
        let aad = &frame[..LEN_PREFIX + COUNTER_LEN];
        let mut body = frame[LEN_PREFIX + COUNTER_LEN..frame.len() - TAG_LEN].to_vec();
        let tag = &frame[frame.len() - TAG_LEN..];
        self.aead
            .open_in_place(&nonce_for(self.role.peer(), counter), aad, &mut body, tag)
            .map_err(|_| EnclaveError::AuthFail)?;
        if counter < self.recv_counter {
            return Err(EnclaveError::ReplayDetected);
        }
        if counter > self.recv_counter {
            return Err(EnclaveError::Reordered);
        }
        self.recv_counter += 1;
        Ok(body)
    }
}

/// A complete frame and the bytes after it.
pub type FrameSplit<'a> = (&'a [u8], &'a [u8]);

/// Splits one length-prefixed frame off the front of `buf`, if complete.
pub fn split_frame(buf: &[u8]) -> Result<Option<FrameSplit<'_>>, EnclaveError> {
    if buf.len() < LEN_PREFIX {
        return Ok(None);
    }
    let len = u32::from_be_bytes(buf[..LEN_PREFIX].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(EnclaveError::Malformed("frame too long"));
    }
    if buf.len() < LEN_PREFIX + len {
        return Ok(None);
    }
    Ok(Some(buf.split_at(LEN_PREFIX + len)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (Session, Session) {
        let key = [9u8; 32];
        (Session::new(Role::Client, key, [1; 32]), Session::new(Role::Server, key, [1; 32]))
    }

    #[test]
    fn seal_unseal_identity_both_directions() {
        let (mut c, mut s) = pair();
        for i in 0..5u8 {
            let f = c.seal(&[i; 10]);
            assert_eq!(f.len(), 10 + FRAME_OVERHEAD);
            assert_eq!(s.unseal(&f).unwrap(), vec![i; 10]);
            let r = s.seal(b"reply");
            assert_eq!(c.unseal(&r).unwrap(), b"reply");
        }
        assert_eq!(c.session_id(), s.session_id());
    }

    #[test]
    fn replay_and_reorder_are_rejected() {
        let (mut c, mut s) = pair();
        let frames: Vec<_> = (0..5u8).map(|i| c.seal(&[i])).collect();
        for f in &frames[..4] {
            s.unseal(f).unwrap();
        }
        assert!(matches!(s.unseal(&frames[3]), Err(EnclaveError::ReplayDetected)));
        let later = c.seal(b"x");
        assert!(matches!(s.unseal(&later), Err(EnclaveError::Reordered)));
        assert_eq!(s.unseal(&frames[4]).unwrap(), vec![4]);
        assert_eq!(s.unseal(&later).unwrap(), b"x");
    }

    #[test]
    fn bit_flips_and_truncation_fail_auth() {
        let (mut c, mut s) = pair();
        let f = c.seal(b"hello world");
        for i in 0..f.len() {
            let mut g = f.clone();
            g[i] ^= 0x20;
            assert!(s.unseal(&g).is_err(), "flip at {i}");
        }
        assert!(matches!(s.unseal(&f[..f.len() - 1]), Err(EnclaveError::AuthFail)));
        assert!(matches!(s.unseal(&f[..6]), Err(EnclaveError::AuthFail)));
        // A frame reflected back to its sender does not open.
        assert!(c.unseal(&f).is_err());
        assert_eq!(s.unseal(&f).unwrap(), b"hello world");
    }

    #[test]
    fn split_frame_boundaries() {
        let (mut c, _) = pair();
        let f = c.seal(b"abc");
        let mut buf = f.clone();
        buf.extend_from_slice(&[0, 0]);
        let (head, rest) = split_frame(&buf).unwrap().unwrap();
        assert_eq!(head, &f[..]);
        assert_eq!(rest, &[0, 0]);
        assert!(split_frame(&f[..5]).unwrap().is_none());
        assert!(split_frame(&[0xff, 0xff, 0xff, 0xff]).is_err());
    }
}
