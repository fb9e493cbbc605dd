//! AES-256-GCM with random 96-bit nonces.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::{CryptoRng, RngCore};

pub const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("authenticated decryption failed")]
pub struct AuthFailure;

pub fn seal<R: RngCore + CryptoRng>(key: &[u8; 32], aad: &[u8], plaintext: &[u8], rng: &mut R) -> ([u8; NONCE_LEN], Vec<u8>) {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = Aes256Gcm::new(key.into())
        .encrypt(&Nonce::from(nonce), Payload { msg: plaintext, aad })
        .expect("AES-GCM encryption of in-memory data cannot fail");
    (nonce, ct)
}

pub fn open(key: &[u8; 32], aad: &[u8], nonce: &[u8; NONCE_LEN], ciphertext: &[u8]) -> Result<Vec<u8>, AuthFailure> {
    Aes256Gcm::new(key.into())
        .decrypt(&Nonce::from(*nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| AuthFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let key = [7u8; 32];
        let (nonce, mut ct) = seal(&key, b"ad", b"attack at dawn", &mut rng);
        assert_eq!(open(&key, b"ad", &nonce, &ct).unwrap(), b"attack at dawn");
        assert_eq!(open(&key, b"other", &nonce, &ct), Err(AuthFailure));
        assert_eq!(open(&[8u8; 32], b"ad", &nonce, &ct), Err(AuthFailure));
        ct[0] ^= 1;
        assert_eq!(open(&key, b"ad", &nonce, &ct), Err(AuthFailure));
    }
}
