//! The pairing group shared by both ABE schemes.
//!
//! BLS12-381 with the asymmetric pairing `e: G1 x G2 -> GT`. Attribute hashes
//! live in G1 (hash-to-curve, SSWU with SHA-256), user-key anchor components
//! in G2, data-node components in G1. Every pairing evaluated during
//! decryption is therefore `e(G1 element, G2 element)`.

use std::cell::Cell;
use std::sync::OnceLock;

use ark_bls12_381::{g1, Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::{Field, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::codec::{CodecError, Reader, Writer};
use crate::policy::AttributeName;

pub type Scalar = Fr;
pub type Gt = PairingOutput<Bls12_381>;
pub use ark_bls12_381::{G1Affine as G1, G2Affine as G2};

/// Curve identifier written into container headers.
pub const CURVE_BLS12_381: u8 = 1;

/// Security level in bits this build supports.
pub const SECURITY_BITS: u32 = 128;

const ATTRIBUTE_DST: &[u8] = b"HEIRLOOM-ATTR-V01-CS01-with-BLS12381G1_XMD:SHA-256_SSWU_RO_";

type AttributeHasher = MapToCurveBasedHasher<G1Projective, ark_ff::field_hashers::DefaultFieldHasher<Sha256, 128>, WBMap<g1::Config>>;

fn attribute_hasher() -> &'static AttributeHasher {
    static HASHER: OnceLock<AttributeHasher> = OnceLock::new();
    HASHER.get_or_init(|| AttributeHasher::new(ATTRIBUTE_DST).expect("valid hash-to-curve parameters"))
}

/// `H1`: deterministic hash of an attribute name into G1.
pub fn hash_attribute(attr: &AttributeName) -> G1Affine {
    attribute_hasher()
        .hash(attr.as_str().as_bytes())
        .expect("hash-to-curve is total")
}

pub fn g1_generator() -> G1Projective {
    G1Projective::generator()
}

pub fn g2_generator() -> G2Projective {
    G2Projective::generator()
}

pub fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    Scalar::rand(rng)
}

pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::rand(rng);
        if !s.is_zero() {
            return s;
        }
    }
}

pub fn random_gt<R: RngCore + CryptoRng>(rng: &mut R) -> Gt {
    // A uniformly random exponent of the base pairing keeps the element in
    // the prime-order subgroup.
    base_pairing() * random_nonzero_scalar(rng)
}

pub fn base_pairing() -> Gt {
    static BASE: OnceLock<Gt> = OnceLock::new();
    *BASE.get_or_init(|| Bls12_381::pairing(G1Affine::generator(), G2Affine::generator()))
}

pub fn pairing(p: G1Affine, q: G2Affine) -> Gt {
    Bls12_381::pairing(p, q)
}

/// `prod e(p_i, q_i)` with a single final exponentiation.
pub fn multi_pairing(g1s: &[G1Affine], g2s: &[G2Affine]) -> Gt {
    Bls12_381::multi_pairing(g1s.iter().copied(), g2s.iter().copied())
}

pub fn mul_g1(base: impl Into<G1Projective>, k: Scalar) -> G1Affine {
    (base.into() * k).into_affine()
}

pub fn mul_g2(base: impl Into<G2Projective>, k: Scalar) -> G2Affine {
    (base.into() * k).into_affine()
}

pub fn scalar_inverse(k: Scalar) -> Option<Scalar> {
    k.inverse()
}

/// Lagrange coefficients at zero for two distinct abscissae.
pub fn lagrange_at_zero(x1: Scalar, x2: Scalar) -> Option<(Scalar, Scalar)> {
    let inv = (x1 - x2).inverse()?;
    // l1(0) = (0 - x2)/(x1 - x2), l2(0) = (0 - x1)/(x2 - x1)
    Some((-x2 * inv, x1 * inv))
}

/// 256-bit symmetric key derived from a GT element's canonical encoding.
pub fn gt_to_key(gt: &Gt) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(576);
    gt.serialize_compressed(&mut bytes).expect("serialising into a Vec cannot fail");
    let mut h = Sha256::new();
    h.update(b"heirloom/gt-kdf/v1");
    h.update(&bytes);
    h.finalize().into()
}

/// Counts pairing evaluations (one per `e(.,.)` term) for instrumentation.
#[derive(Debug, Default)]
pub struct PairingCounter(Cell<usize>);

impl PairingCounter {
    pub fn pairing(&self, p: G1Affine, q: G2Affine) -> Gt {
        self.0.set(self.0.get() + 1);
        pairing(p, q)
    }

    pub fn multi_pairing(&self, g1s: &[G1Affine], g2s: &[G2Affine]) -> Gt {
        self.0.set(self.0.get() + g1s.len());
        multi_pairing(g1s, g2s)
    }

    pub fn count(&self) -> usize {
        self.0.get()
    }
}

// Canonical compressed encodings. Deserialisation validates curve and
// subgroup membership.

pub(crate) fn write_point<T: CanonicalSerialize>(w: &mut Writer, p: &T) {
    let mut buf = Vec::new();
    p.serialize_compressed(&mut buf).expect("serialising into a Vec cannot fail");
    w.raw(&buf);
}

pub(crate) fn read_point<T: CanonicalDeserialize + CanonicalSerialize + Default>(r: &mut Reader<'_>) -> Result<T, CodecError> {
    let size = T::default().compressed_size();
    let bytes = r.raw(size)?;
    T::deserialize_compressed(bytes).map_err(|_| CodecError::InvalidElement)
}

pub(crate) fn write_scalar(w: &mut Writer, s: &Scalar) {
    write_point(w, s);
}

pub(crate) fn read_scalar(r: &mut Reader<'_>) -> Result<Scalar, CodecError> {
    read_point(r)
}

pub(crate) fn write_g1(w: &mut Writer, p: &G1Affine) {
    write_point(w, p)
}

pub(crate) fn read_g1(r: &mut Reader<'_>) -> Result<G1Affine, CodecError> {
    read_point(r)
}

pub(crate) fn write_g2(w: &mut Writer, p: &G2Affine) {
    write_point(w, p)
}

pub(crate) fn read_g2(r: &mut Reader<'_>) -> Result<G2Affine, CodecError> {
    read_point(r)
}

pub(crate) fn write_gt(w: &mut Writer, p: &Gt) {
    write_point(w, p)
}

pub(crate) fn read_gt(r: &mut Reader<'_>) -> Result<Gt, CodecError> {
    read_point(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn attribute_hash_is_deterministic_and_separating() {
        let a = AttributeName::new("A").unwrap();
        let b = AttributeName::new("B").unwrap();
        assert_eq!(hash_attribute(&a), hash_attribute(&a));
        assert_ne!(hash_attribute(&a), hash_attribute(&b));
        assert!(!hash_attribute(&a).is_zero());
    }

    #[test]
    fn lagrange_interpolates_a_line() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (c0, c1) = (random_scalar(&mut rng), random_scalar(&mut rng));
        let (x1, x2) = (random_nonzero_scalar(&mut rng), random_nonzero_scalar(&mut rng));
        let p = |x: Scalar| c0 + c1 * x;
        let (l1, l2) = lagrange_at_zero(x1, x2).unwrap();
        assert_eq!(p(x1) * l1 + p(x2) * l2, c0);
        assert!(lagrange_at_zero(x1, x1).is_none());
    }

    #[test]
    fn pairing_is_bilinear() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (a, b) = (random_scalar(&mut rng), random_scalar(&mut rng));
        let lhs = pairing(mul_g1(g1_generator(), a), mul_g2(g2_generator(), b));
        assert_eq!(lhs, base_pairing() * (a * b));
    }

    #[test]
    fn point_encodings_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = mul_g1(g1_generator(), random_scalar(&mut rng));
        let q = mul_g2(g2_generator(), random_scalar(&mut rng));
        let t = random_gt(&mut rng);
        let mut w = Writer::new();
        write_g1(&mut w, &p);
        write_g2(&mut w, &q);
        write_gt(&mut w, &t);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len(), 48 + 96 + 576);
        let mut r = Reader::new(&bytes);
        assert_eq!(read_g1(&mut r).unwrap(), p);
        assert_eq!(read_g2(&mut r).unwrap(), q);
        assert_eq!(read_gt(&mut r).unwrap(), t);
    }

    #[test]
    fn corrupted_point_is_rejected() {
        let p = mul_g1(g1_generator(), Scalar::from(7u64));
        let mut w = Writer::new();
        write_g1(&mut w, &p);
        let mut bytes = w.into_bytes();
        bytes[10] ^= 0x55;
        assert!(read_g1(&mut Reader::new(&bytes)).is_err());
    }
}
