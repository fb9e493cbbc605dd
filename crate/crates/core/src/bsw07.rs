//! Bethencourt–Sahai–Waters CP-ABE, one message per ciphertext.
//!
//! Runs on the same pairing group and attribute hash as [`crate::pdcpabe`]
//! so the two schemes differ only in structure. Messages are encrypted
//! hybrid-style: a random GT element is ABE-encrypted and hashed into an
//! AES-256-GCM key for the payload.
//!
//! Placement: `h = g1^beta` and `C = h^s` in G1, `D = g2^{(alpha + r)/beta}`
//! in G2, leaf `C_y = g2^{q_y(0)}` and `C_y' = H1(att)^{q_y(0)}`, key
//! `D_j = g1^r H1(j)^{r_j}` and `D_j' = g2^{r_j}`.

use std::collections::{BTreeMap, BTreeSet};

use ark_ec::CurveGroup;
use ark_ff::One;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{read_header, write_header, CodecError, Reader, Writer};
use crate::group::{
    self, read_g1, read_g2, read_gt, read_scalar, write_g1, write_g2, write_gt, write_scalar, Gt, PairingCounter, Scalar,
    CURVE_BLS12_381, G1, G2,
};
use crate::policy::{parse_policy, AttributeName, PolicyError, PolicyExpr};
use crate::symmetric::{self, NONCE_LEN};

pub const MAGIC: &[u8; 8] = b"BSW07---";
pub const VERSION: u16 = 1;

const KIND_CIPHERTEXT: u8 = 1;
const KIND_PUBLIC_PARAMS: u8 = 2;
const KIND_MASTER_KEY: u8 = 3;
const KIND_USER_KEY: u8 = 4;

#[derive(Debug, Error)]
pub enum BswError {
    #[error("attribute set is empty")]
    EmptyAttributeSet,
    #[error("policy not satisfied")]
    PolicyNotSatisfied,
    #[error("symmetric authentication failure")]
    AuthFailure,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BswParams {
    pub h: G1,
    pub egg_alpha: Gt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BswMasterKey {
    pub beta: Scalar,
    pub g_alpha: G2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BswAttributeKey {
    pub d: G1,
    pub d_prime: G2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BswUserKey {
    pub d: G2,
    pub attrs: BTreeMap<AttributeName, BswAttributeKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafPair {
    pub c_y: G2,
    pub c_y_prime: G1,
}

/// Leaf pairs are stored in left-to-right leaf order of `policy`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BswCiphertext {
    pub policy: PolicyExpr,
    pub c_tilde: Gt,
    pub c: G1,
    pub leaves: Vec<LeafPair>,
    pub nonce: [u8; NONCE_LEN],
    pub payload: Vec<u8>,
}

impl BswCiphertext {
    pub fn leaf_pair_count(&self) -> usize {
        self.leaves.len()
    }
}

pub fn setup<R: RngCore + CryptoRng>(rng: &mut R) -> (BswParams, BswMasterKey) {
    let alpha = group::random_nonzero_scalar(rng);
    let beta = group::random_nonzero_scalar(rng);
    let pp = BswParams {
        h: group::mul_g1(group::g1_generator(), beta),
        egg_alpha: group::base_pairing() * alpha,
    };
    let mk = BswMasterKey {
        beta,
        g_alpha: group::mul_g2(group::g2_generator(), alpha),
    };
    (pp, mk)
}

pub fn keygen<R: RngCore + CryptoRng>(mk: &BswMasterKey, attrs: &BTreeSet<AttributeName>, rng: &mut R) -> Result<BswUserKey, BswError> {
    if attrs.is_empty() {
        return Err(BswError::EmptyAttributeSet);
    }
    let r = group::random_nonzero_scalar(rng);
    let inv_beta = group::scalar_inverse(mk.beta).expect("beta is nonzero");
    let g2 = group::g2_generator();
    let d = group::mul_g2(g2 * r + mk.g_alpha, inv_beta);
    let g1_r = group::g1_generator() * r;
    let attrs = attrs
        .iter()
        .map(|a| {
            let rj = group::random_nonzero_scalar(rng);
            let d = (g1_r + group::hash_attribute(a) * rj).into_affine();
            (a.clone(), BswAttributeKey { d, d_prime: group::mul_g2(g2, rj) })
        })
        .collect();
    Ok(BswUserKey { d, attrs })
}

pub fn encrypt<R: RngCore + CryptoRng>(pp: &BswParams, message: &[u8], policy: &PolicyExpr, rng: &mut R) -> BswCiphertext {
    let s = group::random_scalar(rng);
    let m = group::random_gt(rng);
    let mut leaves = Vec::with_capacity(policy.leaf_count());
    share(policy, s, &mut leaves, rng);
    let (nonce, payload) = symmetric::seal(&group::gt_to_key(&m), &policy_aad(policy), message, rng);
    BswCiphertext {
        policy: policy.clone(),
        c_tilde: m + pp.egg_alpha * s,
        c: group::mul_g1(pp.h, s),
        leaves,
        nonce,
        payload,
    }
}

/// Children take indices 1 and 2.
fn share<R: RngCore + CryptoRng>(node: &PolicyExpr, value: Scalar, out: &mut Vec<LeafPair>, rng: &mut R) {
    match node {
        PolicyExpr::Attr(a) => out.push(LeafPair {
            c_y: group::mul_g2(group::g2_generator(), value),
            c_y_prime: group::mul_g1(group::hash_attribute(a), value),
        }),
        PolicyExpr::Or(l, r) => {
            share(l, value, out, rng);
            share(r, value, out, rng);
        }
        PolicyExpr::And(l, r) => {
            let slope = group::random_scalar(rng);
            share(l, value + slope, out, rng);
            share(r, value + slope + slope, out, rng);
        }
    }
}

fn policy_aad(policy: &PolicyExpr) -> Vec<u8> {
    policy.to_string().into_bytes()
}

pub fn decrypt(pp: &BswParams, key: &BswUserKey, ct: &BswCiphertext) -> Result<Vec<u8>, BswError> {
    decrypt_counted(pp, key, ct).0
}

/// Also reports the number of pairings evaluated.
pub fn decrypt_counted(_pp: &BswParams, key: &BswUserKey, ct: &BswCiphertext) -> (Result<Vec<u8>, BswError>, usize) {
    let counter = PairingCounter::default();
    let result = (|| {
        if ct.leaves.len() != ct.policy.leaf_count() {
            return Err(BswError::MalformedCiphertext("leaf count does not match policy".into()));
        }
        let mut next = 0;
        let a = recover(&ct.policy, key, &ct.leaves, &mut next, &counter).ok_or(BswError::PolicyNotSatisfied)?;
        // m = C~ * A / e(C, D)
        let m = ct.c_tilde + a - counter.pairing(ct.c, key.d);
        symmetric::open(&group::gt_to_key(&m), &policy_aad(&ct.policy), &ct.nonce, &ct.payload).map_err(|_| BswError::AuthFailure)
    })();
    (result, counter.count())
}

/// Walks the tree in leaf order; `next` tracks the position in `leaves` so
/// skipped subtrees still advance it.
fn recover(node: &PolicyExpr, key: &BswUserKey, leaves: &[LeafPair], next: &mut usize, counter: &PairingCounter) -> Option<Gt> {
    match node {
        PolicyExpr::Attr(a) => {
            let pair = &leaves[*next];
            *next += 1;
            let k = key.attrs.get(a)?;
            Some(counter.multi_pairing(&[k.d, -pair.c_y_prime], &[pair.c_y, k.d_prime]))
        }
        PolicyExpr::Or(l, r) => {
            let left = recover(l, key, leaves, next, counter);
            if left.is_some() {
                *next += r.leaf_count();
                return left;
            }
            recover(r, key, leaves, next, counter)
        }
        PolicyExpr::And(l, r) => {
            let left = recover(l, key, leaves, next, counter);
            if left.is_none() {
                *next += r.leaf_count();
                return None;
            }
            let right = recover(r, key, leaves, next, counter)?;
            let one = Scalar::one();
            let (l1, l2) = group::lagrange_at_zero(one, one + one).expect("distinct indices");
            Some(left? * l1 + right * l2)
        }
    }
}

impl BswCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, MAGIC, VERSION, CURVE_BLS12_381, KIND_CIPHERTEXT);
        w.str(&self.policy.to_string());
        write_gt(&mut w, &self.c_tilde);
        write_g1(&mut w, &self.c);
        w.u32(self.leaves.len() as u32);
        for leaf in &self.leaves {
            write_g2(&mut w, &leaf.c_y);
            write_g1(&mut w, &leaf.c_y_prime);
        }
        w.raw(&self.nonce).bytes(&self.payload);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BswError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, MAGIC, VERSION, CURVE_BLS12_381, KIND_CIPHERTEXT)?;
        let policy = parse_policy(r.str()?)?;
        let c_tilde = read_gt(&mut r)?;
        let c = read_g1(&mut r)?;
        let n = r.count(96 + 48)?;
        if n != policy.leaf_count() {
            return Err(BswError::MalformedCiphertext("leaf count does not match policy".into()));
        }
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            leaves.push(LeafPair {
                c_y: read_g2(&mut r)?,
                c_y_prime: read_g1(&mut r)?,
            });
        }
        let nonce = r.raw(NONCE_LEN)?.try_into().expect("length checked");
        let payload = r.bytes()?.to_vec();
        r.finish()?;
        Ok(BswCiphertext {
            policy,
            c_tilde,
            c,
            leaves,
            nonce,
            payload,
        })
    }
}

impl BswParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, MAGIC, VERSION, CURVE_BLS12_381, KIND_PUBLIC_PARAMS);
        write_g1(&mut w, &self.h);
        write_gt(&mut w, &self.egg_alpha);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BswError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, MAGIC, VERSION, CURVE_BLS12_381, KIND_PUBLIC_PARAMS)?;
        let pp = BswParams {
            h: read_g1(&mut r)?,
            egg_alpha: read_gt(&mut r)?,
        };
        r.finish()?;
        Ok(pp)
    }
}

impl BswMasterKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, MAGIC, VERSION, CURVE_BLS12_381, KIND_MASTER_KEY);
        write_scalar(&mut w, &self.beta);
        write_g2(&mut w, &self.g_alpha);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BswError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, MAGIC, VERSION, CURVE_BLS12_381, KIND_MASTER_KEY)?;
        let mk = BswMasterKey {
            beta: read_scalar(&mut r)?,
            g_alpha: read_g2(&mut r)?,
        };
        r.finish()?;
        Ok(mk)
    }
}

impl BswUserKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_header(&mut w, MAGIC, VERSION, CURVE_BLS12_381, KIND_USER_KEY);
        write_g2(&mut w, &self.d);
        w.u32(self.attrs.len() as u32);
        for (name, k) in &self.attrs {
            w.str(name.as_str());
            write_g1(&mut w, &k.d);
            write_g2(&mut w, &k.d_prime);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BswError> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, MAGIC, VERSION, CURVE_BLS12_381, KIND_USER_KEY)?;
        let d = read_g2(&mut r)?;
        let n = r.count(4 + 48 + 96)?;
        let mut attrs = BTreeMap::new();
        for _ in 0..n {
            let name = AttributeName::new(r.str()?)?;
            attrs.insert(
                name,
                BswAttributeKey {
                    d: read_g1(&mut r)?,
                    d_prime: read_g2(&mut r)?,
                },
            );
        }
        r.finish()?;
        Ok(BswUserKey { d, attrs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::attribute_set;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn key(mk: &BswMasterKey, names: &[&str], r: &mut ChaCha20Rng) -> BswUserKey {
        keygen(mk, &attribute_set(names.iter().copied()).unwrap(), r).unwrap()
    }

    #[test]
    fn setup_is_consistent() {
        let mut r = rng(1);
        let (pp, mk) = setup(&mut r);
        assert_eq!(group::pairing(group::g1_generator().into_affine(), mk.g_alpha), pp.egg_alpha);
        assert_eq!(pp.h, group::mul_g1(group::g1_generator(), mk.beta));
    }

    #[test]
    fn single_attribute_round_trip_and_denial() {
        let mut r = rng(2);
        let (pp, mk) = setup(&mut r);
        let ct = encrypt(&pp, b"hello", &PolicyExpr::attr("A"), &mut r);
        assert_eq!(decrypt(&pp, &key(&mk, &["A"], &mut r), &ct).unwrap(), b"hello");
        assert!(matches!(
            decrypt(&pp, &key(&mk, &["B"], &mut r), &ct),
            Err(BswError::PolicyNotSatisfied)
        ));
    }

    #[test]
    fn repeated_encryptions_are_independent() {
        let mut r = rng(3);
        let (pp, _) = setup(&mut r);
        let p = parse_policy("(A and B)").unwrap();
        let a = encrypt(&pp, b"m", &p, &mut r);
        let b = encrypt(&pp, b"m", &p, &mut r);
        assert_ne!(a.c, b.c);
        assert_ne!(a.leaves, b.leaves);
    }

    #[test]
    fn nested_policy_skips_unsatisfied_branches() {
        let mut r = rng(4);
        let (pp, mk) = setup(&mut r);
        let p = parse_policy("((A and B) or (C and (D or E)))").unwrap();
        let ct = encrypt(&pp, b"x", &p, &mut r);
        assert_eq!(ct.leaf_pair_count(), 5);
        assert!(decrypt(&pp, &key(&mk, &["C", "E"], &mut r), &ct).is_ok());
        assert!(decrypt(&pp, &key(&mk, &["A", "D"], &mut r), &ct).is_err());
    }

    #[test]
    fn merged_key_fails() {
        let mut r = rng(5);
        let (pp, mk) = setup(&mut r);
        let ct = encrypt(&pp, b"secret", &parse_policy("(A and B)").unwrap(), &mut r);
        let ka = key(&mk, &["A"], &mut r);
        let kb = key(&mk, &["B"], &mut r);
        let mut merged = ka.clone();
        merged.attrs.extend(kb.attrs);
        assert!(matches!(decrypt(&pp, &merged, &ct), Err(BswError::AuthFailure)));
    }

    #[test]
    fn serialisation_round_trips() {
        let mut r = rng(6);
        let (pp, mk) = setup(&mut r);
        let k = key(&mk, &["A", "B"], &mut r);
        let ct = encrypt(&pp, b"payload", &parse_policy("(A or (B and C))").unwrap(), &mut r);
        assert_eq!(BswParams::from_bytes(&pp.to_bytes()).unwrap(), pp);
        assert_eq!(BswMasterKey::from_bytes(&mk.to_bytes()).unwrap(), mk);
        assert_eq!(BswUserKey::from_bytes(&k.to_bytes()).unwrap(), k);
        let bytes = ct.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let back = BswCiphertext::from_bytes(&bytes).unwrap();
        assert_eq!(back, ct);
        assert_eq!(decrypt(&pp, &k, &back).unwrap(), b"payload");
        assert!(BswCiphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn pairing_count_matches_used_leaves() {
        let mut r = rng(7);
        let (pp, mk) = setup(&mut r);
        let ct = encrypt(&pp, b"x", &parse_policy("((A and B) or C)").unwrap(), &mut r);
        let (res, n) = decrypt_counted(&pp, &key(&mk, &["A", "B", "C"], &mut r), &ct);
        assert!(res.is_ok());
        // two leaves of the AND branch, two terms each, plus e(C, D)
        assert_eq!(n, 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn decrypts_iff_policy_holds(
            policy in crate::policy::tests::arb_policy(),
            mask in 1u8..32,
            seed in any::<u64>(),
        ) {
            let mut r = rng(seed);
            let (pp, mk) = setup(&mut r);
            let names: Vec<&str> = ["A", "B", "C", "D", "E"]
                .into_iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| n)
                .collect();
            let k = key(&mk, &names, &mut r);
            let ct = encrypt(&pp, b"oracle", &policy, &mut r);
            let expected = policy.evaluate(&k.attrs.keys().cloned().collect());
            prop_assert_eq!(decrypt(&pp, &k, &ct).is_ok(), expected);
        }
    }
}
