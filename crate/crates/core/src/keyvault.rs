//! Heir keypairs, envelope encryption of ABE user keys, and authority
//! override attestations, all on P-256.
//!
//! A heir's keypair is derived from a password with Argon2id, so it can be
//! rebuilt from the password alone. Envelopes use an ephemeral ECDH
//! exchange, HKDF-SHA256 and AES-256-GCM:
//!
//! ```text
//! "DWENV001" | ephemeral point (33, SEC1 compressed) | nonce (12) | u32 len | ciphertext
//! ```

use argon2::{Algorithm, Argon2, Params, Version};
use hkdf::Hkdf;
use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use p256::{ecdh, FieldBytes, NonZeroScalar, PublicKey, Scalar, SecretKey, U256};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::symmetric::{self, NONCE_LEN};

pub const ENVELOPE_MAGIC: &[u8; 8] = b"DWENV001";
pub const MIN_SALT_LEN: usize = 16;
const POINT_LEN: usize = 33;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("weak input: {0}")]
    WeakInput(&'static str),
    #[error("key derivation failed: {0}")]
    Kdf(String),
    #[error("envelope authentication failed")]
    AuthFailure,
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("bad attestation")]
    BadAttestation,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Argon2id parameters and the per-deployment salt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfConfig {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
    #[serde(with = "hex")]
    pub salt: Vec<u8>,
}

impl KdfConfig {
    /// Recommended parameters with a fresh 16-byte salt.
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut salt = vec![0u8; MIN_SALT_LEN];
        rng.fill_bytes(&mut salt);
        Self {
            memory_kib: Params::DEFAULT_M_COST,
            iterations: Params::DEFAULT_T_COST,
            parallelism: Params::DEFAULT_P_COST,
            salt,
        }
    }
}

#[derive(Clone)]
pub struct HeirKeypair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

impl std::fmt::Debug for HeirKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeirKeypair")
            .field("pk", &public_key_hex(&self.pk))
            .finish_non_exhaustive()
    }
}

/// Derives with the recommended Argon2id parameters.
pub fn derive_keypair(password: &str, salt: &[u8]) -> Result<HeirKeypair, KeyError> {
    derive_keypair_with(
        &KdfConfig {
            memory_kib: Params::DEFAULT_M_COST,
            iterations: Params::DEFAULT_T_COST,
            parallelism: Params::DEFAULT_P_COST,
            salt: salt.to_vec(),
        },
        password,
    )
}

pub fn derive_keypair_with(config: &KdfConfig, password: &str) -> Result<HeirKeypair, KeyError> {
    if password.is_empty() {
        return Err(KeyError::WeakInput("empty password"));
    }
    if config.salt.len() < MIN_SALT_LEN {
        return Err(KeyError::WeakInput("salt shorter than 16 bytes"));
    }
    let params = Params::new(config.memory_kib, config.iterations, config.parallelism, Some(32)).map_err(|e| KeyError::Kdf(e.to_string()))?;
    let argon = Argon2::new(Algorithm::Argon2id, Version::V0x13, params);
    let mut salt = config.salt.clone();
    for counter in 0u32.. {
        let mut out = FieldBytes::default();
        argon
            .hash_password_into(password.as_bytes(), &salt, &mut out)
            .map_err(|e| KeyError::Kdf(e.to_string()))?;
        let scalar = <Scalar as Reduce<U256>>::reduce_bytes(&out);
        if let Some(nz) = Option::<NonZeroScalar>::from(NonZeroScalar::new(scalar)) {
            let sk = SecretKey::from(nz);
            let pk = sk.public_key();
            return Ok(HeirKeypair { sk, pk });
        }
        // Zero after reduction: resample with a counter-extended salt.
        salt.truncate(config.salt.len());
        salt.extend_from_slice(&counter.to_be_bytes());
    }
    unreachable!("the counter space is never exhausted")
}

pub fn public_key_hex(pk: &PublicKey) -> String {
    hex::encode(pk.to_encoded_point(true).as_bytes())
}

pub fn parse_public_key(text: &str) -> Result<PublicKey, KeyError> {
    let bytes = hex::decode(text.trim()).map_err(|_| KeyError::InvalidPublicKey)?;
    PublicKey::from_sec1_bytes(&bytes).map_err(|_| KeyError::InvalidPublicKey)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub ephemeral: [u8; POINT_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

fn envelope_key(shared: &ecdh::SharedSecret, ephemeral: &[u8], recipient: &PublicKey) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::new(None, shared.raw_secret_bytes());
    let mut info = b"heirloom/envelope/v1".to_vec();
    info.extend_from_slice(ephemeral);
    info.extend_from_slice(recipient.to_encoded_point(true).as_bytes());
    let mut key = [0u8; 32];
    hk.expand(&info, &mut key).expect("32 bytes is a valid HKDF length");
    key
}

fn envelope_aad(ephemeral: &[u8]) -> Vec<u8> {
    [ENVELOPE_MAGIC.as_slice(), ephemeral].concat()
}

pub fn envelope_encrypt<R: RngCore + CryptoRng>(pk: &PublicKey, blob: &[u8], rng: &mut R) -> Result<Envelope, KeyError> {
    if blob.is_empty() {
        return Err(KeyError::WeakInput("empty envelope payload"));
    }
    let eph = ecdh::EphemeralSecret::random(&mut *rng);
    let eph_point: [u8; POINT_LEN] = eph
        .public_key()
        .to_encoded_point(true)
        .as_bytes()
        .try_into()
        .expect("compressed P-256 points are 33 bytes");
    let key = envelope_key(&eph.diffie_hellman(pk), &eph_point, pk);
    let (nonce, ciphertext) = symmetric::seal(&key, &envelope_aad(&eph_point), blob, rng);
    Ok(Envelope {
        ephemeral: eph_point,
        nonce,
        ciphertext,
    })
}

pub fn envelope_decrypt(sk: &SecretKey, env: &Envelope) -> Result<Vec<u8>, KeyError> {
    let eph = PublicKey::from_sec1_bytes(&env.ephemeral).map_err(|_| KeyError::AuthFailure)?;
    let shared = ecdh::diffie_hellman(sk.to_nonzero_scalar(), eph.as_affine());
    let key = envelope_key(&shared, &env.ephemeral, &sk.public_key());
    symmetric::open(&key, &envelope_aad(&env.ephemeral), &env.nonce, &env.ciphertext).map_err(|_| KeyError::AuthFailure)
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(ENVELOPE_MAGIC)
            .raw(&self.ephemeral)
            .raw(&self.nonce)
            .bytes(&self.ciphertext);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        let mut r = Reader::new(bytes);
        if r.raw(8)? != ENVELOPE_MAGIC {
            return Err(CodecError::BadMagic {
                expected: String::from_utf8_lossy(ENVELOPE_MAGIC).into_owned(),
            }
            .into());
        }
        let env = Envelope {
            ephemeral: r.raw(POINT_LEN)?.try_into().expect("length checked"),
            nonce: r.raw(NONCE_LEN)?.try_into().expect("length checked"),
            ciphertext: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(env)
    }
}

fn override_message(will_id: &str) -> Vec<u8> {
    [will_id.as_bytes(), b"OVERRIDE"].concat()
}

/// Signing key held by the authority that may force activation of a will.
#[derive(Clone)]
pub struct AuthorityKey(SigningKey);

impl AuthorityKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(SigningKey::random(rng))
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        *self.0.verifying_key()
    }

    /// ECDSA signature over `will_id || "OVERRIDE"`, 64 bytes `r || s`.
    pub fn attest_override(&self, will_id: &str) -> Vec<u8> {
        let sig: Signature = self.0.sign(&override_message(will_id));
        sig.to_bytes().to_vec()
    }
}

pub fn verify_override(authority: &VerifyingKey, will_id: &str, attestation: &[u8]) -> Result<(), KeyError> {
    let sig = Signature::from_slice(attestation).map_err(|_| KeyError::BadAttestation)?;
    authority
        .verify(&override_message(will_id), &sig)
        .map_err(|_| KeyError::BadAttestation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Cheap parameters so property tests stay fast; production uses the
    /// Argon2 defaults.
    fn light(salt: &[u8]) -> KdfConfig {
        KdfConfig {
            memory_kib: 64,
            iterations: 1,
            parallelism: 1,
            salt: salt.to_vec(),
        }
    }

    const SALT: &[u8; 16] = b"deployment-salt!";

    #[test]
    fn derivation_is_deterministic() {
        let a = derive_keypair("correct horse", SALT).unwrap();
        let b = derive_keypair("correct horse", SALT).unwrap();
        assert_eq!(a.pk, b.pk);
        assert_eq!(a.sk.to_bytes(), b.sk.to_bytes());
    }

    #[test]
    fn one_character_changes_the_key() {
        let a = derive_keypair_with(&light(SALT), "password1").unwrap();
        let b = derive_keypair_with(&light(SALT), "password2").unwrap();
        assert_ne!(a.pk, b.pk);
    }

    #[test]
    fn weak_inputs_are_rejected() {
        assert_eq!(
            derive_keypair("", SALT).unwrap_err(),
            KeyError::WeakInput("empty password")
        );
        assert!(matches!(derive_keypair("pw", b"short"), Err(KeyError::WeakInput(_))));
    }

    #[test]
    fn public_key_hex_round_trips() {
        let kp = derive_keypair_with(&light(SALT), "pw").unwrap();
        let text = public_key_hex(&kp.pk);
        assert_eq!(text.len(), 66);
        assert_eq!(parse_public_key(&text).unwrap(), kp.pk);
        assert_eq!(parse_public_key("zz"), Err(KeyError::InvalidPublicKey));
    }

    #[test]
    fn envelope_rejects_wrong_key_and_tampering() {
        let mut r = ChaCha20Rng::seed_from_u64(1);
        let heir = derive_keypair_with(&light(SALT), "heir").unwrap();
        let other = derive_keypair_with(&light(SALT), "other").unwrap();
        let env = envelope_encrypt(&heir.pk, b"user key bytes", &mut r).unwrap();
        assert_eq!(envelope_decrypt(&heir.sk, &env).unwrap(), b"user key bytes");
        assert_eq!(envelope_decrypt(&other.sk, &env), Err(KeyError::AuthFailure));
        let mut bytes = env.to_bytes();
        assert_eq!(&bytes[..8], ENVELOPE_MAGIC);
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        let tampered = Envelope::from_bytes(&bytes).unwrap();
        assert_eq!(envelope_decrypt(&heir.sk, &tampered), Err(KeyError::AuthFailure));
        assert!(envelope_encrypt(&heir.pk, b"", &mut r).is_err());
    }

    #[test]
    fn envelope_carries_a_user_key() {
        let mut r = ChaCha20Rng::seed_from_u64(2);
        let (_, mk) = crate::pdcpabe::setup(128, &mut r).unwrap();
        let attrs = crate::policy::attribute_set(["A", "B"]).unwrap();
        let key = crate::pdcpabe::keygen(&mk, &attrs, &mut r).unwrap();
        let heir = derive_keypair_with(&light(SALT), "heir").unwrap();
        let env = envelope_encrypt(&heir.pk, &key.to_bytes(), &mut r).unwrap();
        let opened = envelope_decrypt(&heir.sk, &Envelope::from_bytes(&env.to_bytes()).unwrap()).unwrap();
        assert_eq!(crate::pdcpabe::UserKey::from_bytes(&opened).unwrap(), key);
    }

    #[test]
    fn override_attestation() {
        let mut r = ChaCha20Rng::seed_from_u64(3);
        let authority = AuthorityKey::generate(&mut r);
        let vk = authority.verifying_key();
        let sig = authority.attest_override("will-1");
        assert!(verify_override(&vk, "will-1", &sig).is_ok());
        assert_eq!(verify_override(&vk, "will-2", &sig), Err(KeyError::BadAttestation));
        assert_eq!(verify_override(&vk, "will-1", b"garbage"), Err(KeyError::BadAttestation));
        let impostor = AuthorityKey::generate(&mut r).attest_override("will-1");
        assert_eq!(verify_override(&vk, "will-1", &impostor), Err(KeyError::BadAttestation));
    }

    #[test]
    fn config_serialises_salt_as_hex() {
        let mut r = ChaCha20Rng::seed_from_u64(4);
        let cfg = KdfConfig::generate(&mut r);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(&hex::encode(&cfg.salt)));
        assert_eq!(serde_json::from_str::<KdfConfig>(&json).unwrap(), cfg);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn derive_and_envelope_properties(
            password in "[ -~]{1,24}",
            salt in proptest::collection::vec(any::<u8>(), 16..32),
            blob in proptest::collection::vec(any::<u8>(), 1..512),
            flip in any::<prop::sample::Index>(),
            seed in any::<u64>(),
        ) {
            let cfg = light(&salt);
            let kp = derive_keypair_with(&cfg, &password).unwrap();
            prop_assert_eq!(derive_keypair_with(&cfg, &password).unwrap().pk, kp.pk);

            let mut r = ChaCha20Rng::seed_from_u64(seed);
            let env = envelope_encrypt(&kp.pk, &blob, &mut r).unwrap();
            prop_assert_eq!(envelope_decrypt(&kp.sk, &env).unwrap(), blob);

            let mut bytes = env.to_bytes();
            let i = 8 + flip.index(bytes.len() - 8);
            bytes[i] ^= 0x80;
            let opened = Envelope::from_bytes(&bytes).map_err(|_| KeyError::AuthFailure).and_then(|e| envelope_decrypt(&kp.sk, &e));
            prop_assert!(opened.is_err());
        }
    }
}
