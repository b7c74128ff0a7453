//! Simulated sealed storage: blobs encrypted under a key derived from a
//! platform secret and the enclave measurement.

use super::EnclaveError;
use crate::crypto::{derive_key, Aead, Hash32, KEY_LEN};

#[derive(Clone)]
pub struct SealingKey {
    aead: Aead,
}

impl SealingKey {
    pub fn derive(platform_secret: &[u8], measurement: &Hash32) -> Self {
        let key: [u8; KEY_LEN] = derive_key(platform_secret, measurement, b"t3-seal");
        SealingKey { aead: Aead::new(&key) }
    }

    pub fn seal(&self, label: &str, plaintext: &[u8]) -> Vec<u8> {
        self.aead.seal_random(&mut rand::thread_rng(), label.as_bytes(), plaintext)
    }

    pub fn unseal(&self, label: &str, blob: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        self.aead
            .open_random(label.as_bytes(), blob)
            .map_err(|_| EnclaveError::SealBroken)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seal_is_bound_to_measurement_and_label() {
        let a = SealingKey::derive(b"platform", &[1; 32]);
        let b = SealingKey::derive(b"platform", &[2; 32]);
        let blob = a.seal("state", b"secret");
        assert_eq!(a.unseal("state", &blob).unwrap(), b"secret");
        assert!(a.unseal("other", &blob).is_err());
        assert!(b.unseal("state", &blob).is_err());
    }
}
