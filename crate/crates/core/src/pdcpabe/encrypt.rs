//! Multi-file encryption over one integrated access DAG.
//!
//! Secrets flow top-down. Every valued copy of a node is an *instance*; a
//! node gains a new instance whenever a parent needs it to carry a value it
//! does not already have. The table `H` remembers, per node, its first
//! *clean* instance: one whose value can only be learned by satisfying that
//! node's own sub-policy. Clean instances are the only ones reused:
//!
//! * a data node whose root already has a clean instance adopts that value as
//!   its secret `s_i`; the per-node noise `eps_i` keeps its `C` components
//!   distinct;
//! * a clean AND node with a child in `H` interpolates its degree-1
//!   polynomial through `(0, s_x)` and `(index(child), s_child)` and only
//!   propagates to the other child.
//!
//! Values handed down by an OR gate equal the gate's own value and are thus
//! learnable through the sibling branch, so they are never marked clean, and
//! neither is anything an unclean AND derives from them.

use std::collections::{BTreeSet, HashMap};

use ark_ff::{PrimeField, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::{
    AttributeCiphertextPair, Ciphertext, DataNodeCiphertext, EncryptedPayload, LinkInstance, Origin, PdError, PlainItem,
    PublicParams,
};
use crate::group::{self, Gt, Scalar, G1};
use crate::policy::{group_by_policy, FileGroupId, Gate, IntegratedAccessDag, NodeId, NodeKind, ParentRef};
use crate::symmetric;

/// Secret material produced during encryption, kept for white-box tests.
#[derive(Debug, Default)]
pub(crate) struct EncryptionTrace {
    pub secrets: Vec<Scalar>,
    pub noise: Vec<Scalar>,
    pub content_keys: Vec<Gt>,
    /// Values of every instance, per node.
    pub instance_values: Vec<Vec<Scalar>>,
    /// Random polynomial coefficients drawn for fresh AND gates.
    pub coefficients: Vec<Scalar>,
}

pub fn encrypt<R: RngCore + CryptoRng>(pp: &PublicParams, items: &[PlainItem], rng: &mut R) -> Result<Ciphertext, PdError> {
    encrypt_traced(pp, items, rng).map(|(ct, _)| ct)
}

pub(crate) fn encrypt_traced<R: RngCore + CryptoRng>(
    pp: &PublicParams,
    items: &[PlainItem],
    rng: &mut R,
) -> Result<(Ciphertext, EncryptionTrace), PdError> {
    if items.is_empty() {
        return Err(PdError::EmptyInput);
    }
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.id.as_str()) {
            return Err(PdError::DuplicatePayloadId(item.id.clone()));
        }
    }

    let keyed: Vec<(usize, _)> = items.iter().enumerate().map(|(i, it)| (i, it.policy.clone())).collect();
    let groups = group_by_policy(&keyed);
    let dag_input: Vec<_> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (FileGroupId::new(format!("G{i}")).expect("generated ids are valid"), g.policy.clone()))
        .collect();
    let dag = IntegratedAccessDag::build(&dag_input)?;

    let mut index_seed = [0u8; 32];
    rng.fill_bytes(&mut index_seed);
    let index = derive_node_indices(&index_seed, dag.nodes().len());

    let mut prop = Propagator {
        dag: &dag,
        index: &index,
        rng: &mut *rng,
        primary: vec![None; dag.nodes().len()],
        link_instances: vec![Vec::new(); dag.nodes().len()],
        attribute_pairs: vec![Vec::new(); dag.nodes().len()],
        hashes: HashMap::new(),
        values: vec![Vec::new(); dag.nodes().len()],
        coefficients: Vec::new(),
    };

    let mut trace = EncryptionTrace::default();
    let mut data_nodes = Vec::with_capacity(groups.len());
    for (i, data) in dag.data_nodes().iter().enumerate() {
        let root = data.root;
        let (secret, root_instance) = match prop.primary[root.0 as usize] {
            Some((inst, value)) => (value, inst),
            None => {
                let s = group::random_scalar(prop.rng);
                let origin = Origin {
                    parent: ParentRef::Data(i),
                    parent_instance: 0,
                };
                (s, prop.assign(root, s, true, origin))
            }
        };
        let noise = group::random_scalar(prop.rng);
        let ck = group::random_gt(prop.rng);
        let blinded = secret + noise;
        data_nodes.push(DataNodeCiphertext {
            c: ck + pp.egg_alpha * blinded,
            c1: group::mul_g1(pp.f1, blinded),
            c2: group::mul_g1(pp.f2, blinded),
            c3: group::mul_g1(pp.f3, noise),
            root_instance,
        });
        trace.secrets.push(secret);
        trace.noise.push(noise);
        trace.content_keys.push(ck);
    }

    let Propagator {
        link_instances,
        attribute_pairs,
        values,
        coefficients,
        ..
    } = prop;
    trace.instance_values = values;
    trace.coefficients = coefficients;

    let mut payloads = Vec::with_capacity(items.len());
    for (g, group) in groups.iter().enumerate() {
        let key = group::gt_to_key(&trace.content_keys[g]);
        for &item_idx in &group.payload_ids {
            let item = &items[item_idx];
            let aad = payload_aad(&dag.data_nodes()[g].file_group_id, &item.id);
            let (nonce, ciphertext) = symmetric::seal(&key, &aad, &item.data, rng);
            payloads.push(EncryptedPayload {
                payload_id: item.id.clone(),
                group: g as u32,
                nonce,
                ciphertext,
            });
        }
    }
    // Payloads keep caller order.
    let order: HashMap<&str, usize> = items.iter().enumerate().map(|(i, it)| (it.id.as_str(), i)).collect();
    payloads.sort_by_key(|p| order[p.payload_id.as_str()]);

    let ct = Ciphertext {
        dag,
        index_seed,
        data_nodes,
        link_instances,
        attribute_pairs,
        payloads,
    };
    Ok((ct, trace))
}

pub(crate) fn payload_aad(group: &FileGroupId, payload_id: &str) -> Vec<u8> {
    let mut aad = Vec::with_capacity(group.as_str().len() + payload_id.len() + 8);
    aad.extend_from_slice(&(group.as_str().len() as u32).to_be_bytes());
    aad.extend_from_slice(group.as_str().as_bytes());
    aad.extend_from_slice(&(payload_id.len() as u32).to_be_bytes());
    aad.extend_from_slice(payload_id.as_bytes());
    aad
}

/// `index(N)` for every node, uniform over `Z_p \ {0}` given the seed.
pub(crate) fn derive_node_indices(seed: &[u8; 32], count: usize) -> Vec<Scalar> {
    (0..count as u32)
        .map(|node| {
            let mut counter = 0u32;
            loop {
                let mut wide = [0u8; 64];
                for (half, chunk) in wide.chunks_mut(32).enumerate() {
                    let mut h = Sha256::new();
                    h.update(b"heirloom/node-index/v1");
                    h.update(seed);
                    h.update(node.to_be_bytes());
                    h.update(counter.to_be_bytes());
                    h.update([half as u8]);
                    chunk.copy_from_slice(&h.finalize());
                }
                let s = Scalar::from_be_bytes_mod_order(&wide);
                if !s.is_zero() {
                    return s;
                }
                counter += 1;
            }
        })
        .collect()
}

struct Propagator<'a, R> {
    dag: &'a IntegratedAccessDag,
    index: &'a [Scalar],
    rng: &'a mut R,
    /// `H`: first clean instance per node and its value.
    primary: Vec<Option<(u32, Scalar)>>,
    link_instances: Vec<Vec<LinkInstance>>,
    attribute_pairs: Vec<Vec<AttributeCiphertextPair>>,
    hashes: HashMap<NodeId, G1>,
    values: Vec<Vec<Scalar>>,
    coefficients: Vec<Scalar>,
}

impl<R: RngCore + CryptoRng> Propagator<'_, R> {
    fn index_of(&self, id: NodeId) -> Scalar {
        self.index[id.0 as usize]
    }

    /// Gives `node` a new instance carrying `value` and returns its number.
    fn assign(&mut self, node: NodeId, value: Scalar, clean: bool, origin: Origin) -> u32 {
        let slot = node.0 as usize;
        let instance = match &self.dag.node(node).kind {
            NodeKind::Attribute(attr) => {
                let h = *self
                    .hashes
                    .entry(node)
                    .or_insert_with(|| group::hash_attribute(attr));
                let inst = self.attribute_pairs[slot].len() as u32;
                self.attribute_pairs[slot].push(AttributeCiphertextPair {
                    c_hat: group::mul_g2(group::g2_generator(), value),
                    c_hat_prime: group::mul_g1(h, value),
                    origin,
                });
                inst
            }
            NodeKind::Link { gate, children } => {
                let (gate, [left, right]) = (*gate, *children);
                let inst = self.link_instances[slot].len() as u32;
                // Reserve the slot so children can name this instance as origin.
                self.link_instances[slot].push(LinkInstance {
                    children: [0, 0],
                    origin,
                });
                let here = Origin {
                    parent: ParentRef::Node(node),
                    parent_instance: inst,
                };
                let child_instances = if left == right {
                    // (x and x) and (x or x) behave as x.
                    let k = self.reuse_or_assign(left, value, clean, here);
                    [k, k]
                } else {
                    match gate {
                        Gate::Or => [
                            self.assign(left, value, false, here),
                            self.assign(right, value, false, here),
                        ],
                        Gate::And => self.assign_and(value, clean, [left, right], here),
                    }
                };
                self.link_instances[slot][inst as usize].children = child_instances;
                inst
            }
        };
        self.values[slot].push(value);
        if clean && self.primary[slot].is_none() {
            self.primary[slot] = Some((instance, value));
        }
        instance
    }

    fn reuse_or_assign(&mut self, node: NodeId, value: Scalar, clean: bool, origin: Origin) -> u32 {
        match self.primary[node.0 as usize] {
            Some((inst, v)) if clean && v == value => inst,
            _ => self.assign(node, value, clean, origin),
        }
    }

    fn assign_and(&mut self, value: Scalar, clean: bool, children: [NodeId; 2], here: Origin) -> [u32; 2] {
        let reusable = if clean {
            children
                .iter()
                .position(|c| self.primary[c.0 as usize].is_some())
        } else {
            None
        };
        match reusable {
            Some(pos) => {
                let shared = children[pos];
                let other = children[1 - pos];
                let (shared_inst, shared_value) = self.primary[shared.0 as usize].expect("checked above");
                // Line through (0, value) and (index(shared), shared_value).
                let slope = (shared_value - value)
                    * group::scalar_inverse(self.index_of(shared)).expect("indices are nonzero");
                let other_value = value + slope * self.index_of(other);
                let other_inst = self.assign(other, other_value, true, here);
                let mut out = [0; 2];
                out[pos] = shared_inst;
                out[1 - pos] = other_inst;
                out
            }
            None => {
                let slope = group::random_scalar(self.rng);
                self.coefficients.push(slope);
                let l = value + slope * self.index_of(children[0]);
                let r = value + slope * self.index_of(children[1]);
                [
                    self.assign(children[0], l, clean, here),
                    self.assign(children[1], r, clean, here),
                ]
            }
        }
    }
}
