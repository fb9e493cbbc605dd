//! Partially decryptable CP-ABE.
//!
//! One ciphertext carries many payloads. Payloads with the same canonical
//! policy form a file group protected by one symmetric key `ck_i`; every
//! group becomes a data node of a shared [`IntegratedAccessDag`]. A user key
//! unlocks exactly the groups whose policy its attributes satisfy.
//!
//! Component placement on the asymmetric pairing:
//!
//! | component            | group | value                                   |
//! |----------------------|-------|-----------------------------------------|
//! | `f1, f2, f3`         | G1    | `g1^{beta_k}`                           |
//! | `egg_alpha`          | GT    | `e(g1, g2)^alpha`                       |
//! | `MasterKey::g_alpha` | G2    | `g2^alpha`                              |
//! | `UserKey::d1`        | G2    | `g2^{(alpha + r) / beta1}`              |
//! | `UserKey::d3`        | G2    | `g2^{r / beta3}`                        |
//! | `AttributeKey::d`    | G1    | `g1^r * H1(j)^{r_j}`                    |
//! | `AttributeKey::d_prime` | G2 | `g2^{r_j}`                              |
//! | `C`                  | GT    | `ck_i * e(g1, g2)^{alpha (s_i + eps_i)}`|
//! | `C1, C2`             | G1    | `f1^{s_i + eps_i}`, `f2^{s_i + eps_i}`  |
//! | `C3`                 | G1    | `f3^{eps_i}`                            |
//! | `c_hat`              | G2    | `g2^{q}`                                |
//! | `c_hat_prime`        | G1    | `H1(att)^{q}`                           |

mod decrypt;
mod encrypt;
mod format;

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::CodecError;
use crate::group::{self, Gt, Scalar, G1, G2};
use crate::policy::{AttributeName, IntegratedAccessDag, ParentRef, PolicyError, PolicyExpr};

pub use decrypt::{decrypt, decrypt_with, DecryptOptions, DecryptionReport, DenialReason, Denied};
pub use encrypt::encrypt;
#[cfg(test)]
pub(crate) use encrypt::{derive_node_indices, encrypt_traced, EncryptionTrace};

#[derive(Debug, Error)]
pub enum PdError {
    #[error("unsupported security level: {0} bits")]
    UnsupportedSecurityLevel(u32),
    #[error("attribute set is empty")]
    EmptyAttributeSet,
    #[error("nothing to encrypt")]
    EmptyInput,
    #[error("duplicate payload id {0}")]
    DuplicatePayloadId(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub f1: G1,
    pub f2: G1,
    pub f3: G1,
    pub egg_alpha: Gt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub g_alpha: G2,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub beta3: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeKey {
    pub d: G1,
    pub d_prime: G2,
}

/// Decryption key. All attribute components share one blinding exponent `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserKey {
    pub d1: G2,
    pub d3: G2,
    pub attrs: BTreeMap<AttributeName, AttributeKey>,
}

impl UserKey {
    pub fn attribute_names(&self) -> BTreeSet<AttributeName> {
        self.attrs.keys().cloned().collect()
    }

    /// Number of group elements held by the key.
    pub fn element_count(&self) -> usize {
        2 + 2 * self.attrs.len()
    }
}

/// Where an instance's value was propagated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub parent: ParentRef,
    pub parent_instance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataNodeCiphertext {
    pub c: Gt,
    pub c1: G1,
    /// Carried for format fidelity; decryption never consumes it.
    pub c2: G1,
    pub c3: G1,
    /// Instance of the policy root holding this data node's secret.
    pub root_instance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeCiphertextPair {
    pub c_hat: G2,
    pub c_hat_prime: G1,
    pub origin: Origin,
}

/// One valued copy of a link node: which instance of each child it
/// interpolates from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkInstance {
    pub children: [u32; 2],
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedPayload {
    pub payload_id: String,
    /// Index into the DAG's data nodes.
    pub group: u32,
    pub nonce: [u8; crate::symmetric::NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

/// Multi-payload ciphertext. Holds public structure and group elements only:
/// node indices are re-derived from `index_seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub dag: IntegratedAccessDag,
    pub index_seed: [u8; 32],
    pub data_nodes: Vec<DataNodeCiphertext>,
    /// Per DAG node; empty for attribute nodes.
    pub link_instances: Vec<Vec<LinkInstance>>,
    /// Per DAG node; empty for link nodes.
    pub attribute_pairs: Vec<Vec<AttributeCiphertextPair>>,
    pub payloads: Vec<EncryptedPayload>,
}

impl Ciphertext {
    /// Total attribute-ciphertext pairs across all attribute nodes.
    pub fn attribute_pair_count(&self) -> usize {
        self.attribute_pairs.iter().map(Vec::len).sum()
    }

    pub fn link_instance_count(&self) -> usize {
        self.link_instances.iter().map(Vec::len).sum()
    }

    pub fn payload_ids(&self) -> impl Iterator<Item = &str> {
        self.payloads.iter().map(|p| p.payload_id.as_str())
    }

    /// Structural consistency check run before decryption and after parsing.
    pub fn validate(&self) -> Result<(), PdError> {
        use crate::policy::NodeKind;
        let bad = |m: String| Err(PdError::MalformedCiphertext(m));
        let n = self.dag.nodes().len();
        if self.data_nodes.len() != self.dag.data_nodes().len() {
            return bad("data node count mismatch".into());
        }
        if self.link_instances.len() != n || self.attribute_pairs.len() != n {
            return bad("per-node table length mismatch".into());
        }
        let instances = |id: usize| self.link_instances[id].len() + self.attribute_pairs[id].len();
        for node in self.dag.nodes() {
            let id = node.id.0 as usize;
            match &node.kind {
                NodeKind::Attribute(_) => {
                    if !self.link_instances[id].is_empty() || self.attribute_pairs[id].is_empty() {
                        return bad(format!("attribute node {} has no ciphertext pairs", node.id));
                    }
                }
                NodeKind::Link { children, .. } => {
                    if !self.attribute_pairs[id].is_empty() || self.link_instances[id].is_empty() {
                        return bad(format!("link node {} has no instances", node.id));
                    }
                    for inst in &self.link_instances[id] {
                        for (c, k) in children.iter().zip(inst.children) {
                            if k as usize >= instances(c.0 as usize) {
                                return bad(format!("dangling instance reference {}#{k}", c));
                            }
                        }
                    }
                }
            }
        }
        for (d, ct) in self.dag.data_nodes().iter().zip(&self.data_nodes) {
            if ct.root_instance as usize >= instances(d.root.0 as usize) {
                return bad(format!("data node {} references a missing root instance", d.file_group_id));
            }
        }
        let mut ids = BTreeSet::new();
        for p in &self.payloads {
            if p.group as usize >= self.data_nodes.len() {
                return bad(format!("payload {} references unknown group", p.payload_id));
            }
            if !ids.insert(p.payload_id.as_str()) {
                return bad(format!("duplicate payload id {}", p.payload_id));
            }
        }
        Ok(())
    }
}

/// A payload and the policy it is released under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainItem {
    pub id: String,
    pub data: Vec<u8>,
    pub policy: PolicyExpr,
}

impl PlainItem {
    pub fn new(id: impl Into<String>, data: impl Into<Vec<u8>>, policy: PolicyExpr) -> Self {
        Self {
            id: id.into(),
            data: data.into(),
            policy,
        }
    }
}

pub fn setup<R: RngCore + CryptoRng>(security_level: u32, rng: &mut R) -> Result<(PublicParams, MasterKey), PdError> {
    setup_inner(security_level, rng).map(|(pp, mk, _)| (pp, mk))
}

fn setup_inner<R: RngCore + CryptoRng>(security_level: u32, rng: &mut R) -> Result<(PublicParams, MasterKey, Scalar), PdError> {
    if security_level != group::SECURITY_BITS {
        return Err(PdError::UnsupportedSecurityLevel(security_level));
    }
    let alpha = group::random_nonzero_scalar(rng);
    let betas = [
        group::random_nonzero_scalar(rng),
        group::random_nonzero_scalar(rng),
        group::random_nonzero_scalar(rng),
    ];
    let g1 = group::g1_generator();
    let pp = PublicParams {
        f1: group::mul_g1(g1, betas[0]),
        f2: group::mul_g1(g1, betas[1]),
        f3: group::mul_g1(g1, betas[2]),
        egg_alpha: group::base_pairing() * alpha,
    };
    let mk = MasterKey {
        g_alpha: group::mul_g2(group::g2_generator(), alpha),
        beta1: betas[0],
        beta2: betas[1],
        beta3: betas[2],
    };
    Ok((pp, mk, alpha))
}

pub fn keygen<R: RngCore + CryptoRng>(mk: &MasterKey, attrs: &BTreeSet<AttributeName>, rng: &mut R) -> Result<UserKey, PdError> {
    keygen_inner(mk, attrs, rng).map(|(k, _)| k)
}

fn keygen_inner<R: RngCore + CryptoRng>(mk: &MasterKey, attrs: &BTreeSet<AttributeName>, rng: &mut R) -> Result<(UserKey, Scalar), PdError> {
    if attrs.is_empty() {
        return Err(PdError::EmptyAttributeSet);
    }
    let r = group::random_nonzero_scalar(rng);
    let g1 = group::g1_generator();
    let g2 = group::g2_generator();
    let inv_b1 = group::scalar_inverse(mk.beta1).expect("beta1 is nonzero");
    let inv_b3 = group::scalar_inverse(mk.beta3).expect("beta3 is nonzero");
    let d1 = group::mul_g2(ark_ec::AffineRepr::into_group(mk.g_alpha) + g2 * r, inv_b1);
    let d3 = group::mul_g2(g2, r * inv_b3);
    let g1_r = g1 * r;
    let attrs = attrs
        .iter()
        .map(|a| {
            let rj = group::random_nonzero_scalar(rng);
            let h = group::hash_attribute(a);
            let d = ark_ec::CurveGroup::into_affine(g1_r + h * rj);
            (a.clone(), AttributeKey { d, d_prime: group::mul_g2(g2, rj) })
        })
        .collect();
    Ok((UserKey { d1, d3, attrs }, r))
}

#[cfg(test)]
pub(crate) fn setup_traced<R: RngCore + CryptoRng>(rng: &mut R) -> (PublicParams, MasterKey, Scalar) {
    setup_inner(group::SECURITY_BITS, rng).unwrap()
}

#[cfg(test)]
pub(crate) fn keygen_traced<R: RngCore + CryptoRng>(mk: &MasterKey, attrs: &BTreeSet<AttributeName>, rng: &mut R) -> (UserKey, Scalar) {
    keygen_inner(mk, attrs, rng).unwrap()
}
