use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::encrypt::{derive_node_indices, payload_aad};
use super::{Ciphertext, PdError, PublicParams, UserKey};
use crate::group::{self, Gt, PairingCounter, Scalar};
use crate::policy::{Gate, NodeKind};
use crate::symmetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecryptOptions {
    /// Memoise recovered instance values across data nodes (`H2`).
    pub share_cache: bool,
}

impl Default for DecryptOptions {
    fn default() -> Self {
        Self { share_cache: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenialReason {
    PolicyNotSatisfied,
    /// The recovered key did not authenticate the payload: tampering, or a
    /// key assembled from mismatched components.
    AuthFailure,
}

impl fmt::Display for DenialReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenialReason::PolicyNotSatisfied => "policy not satisfied",
            DenialReason::AuthFailure => "symmetric authentication failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Denied {
    pub payload_id: String,
    pub file_group_id: String,
    pub reason: DenialReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecryptionReport {
    pub recovered: BTreeMap<String, Vec<u8>>,
    pub denied: Vec<Denied>,
    /// Pairing evaluations performed.
    pub pairings: usize,
}

impl DecryptionReport {
    pub fn is_recovered(&self, payload_id: &str) -> bool {
        self.recovered.contains_key(payload_id)
    }
}

pub fn decrypt(pp: &PublicParams, key: &UserKey, ct: &Ciphertext) -> Result<DecryptionReport, PdError> {
    decrypt_with(pp, key, ct, DecryptOptions::default())
}

/// Recovers every payload group the key satisfies; the rest are reported as
/// denied rather than failing the call.
pub fn decrypt_with(_pp: &PublicParams, key: &UserKey, ct: &Ciphertext, opts: DecryptOptions) -> Result<DecryptionReport, PdError> {
    ct.validate()?;
    let index = derive_node_indices(&ct.index_seed, ct.dag.nodes().len());
    let mut walker = Walker {
        ct,
        key,
        index: &index,
        counter: PairingCounter::default(),
        cache: opts.share_cache.then(HashMap::new),
    };

    let mut content_keys: Vec<Option<[u8; 32]>> = Vec::with_capacity(ct.data_nodes.len());
    for (data, dct) in ct.dag.data_nodes().iter().zip(&ct.data_nodes) {
        let ck = walker.eval(data.root.0, dct.root_instance).map(|a| {
            // ck = C * A * e(C3, D3) / e(C1, D1)
            let correction = walker
                .counter
                .multi_pairing(&[dct.c3, -dct.c1], &[key.d3, key.d1]);
            group::gt_to_key(&(dct.c + a + correction))
        });
        content_keys.push(ck);
    }

    let mut report = DecryptionReport::default();
    for p in &ct.payloads {
        let group = &ct.dag.data_nodes()[p.group as usize].file_group_id;
        let deny = |reason| Denied {
            payload_id: p.payload_id.clone(),
            file_group_id: group.to_string(),
            reason,
        };
        match content_keys[p.group as usize] {
            None => report.denied.push(deny(DenialReason::PolicyNotSatisfied)),
            Some(k) => match symmetric::open(&k, &payload_aad(group, &p.payload_id), &p.nonce, &p.ciphertext) {
                Ok(pt) => {
                    report.recovered.insert(p.payload_id.clone(), pt);
                }
                Err(_) => report.denied.push(deny(DenialReason::AuthFailure)),
            },
        }
    }
    report.pairings = walker.counter.count();
    Ok(report)
}

struct Walker<'a> {
    ct: &'a Ciphertext,
    key: &'a UserKey,
    index: &'a [Scalar],
    counter: PairingCounter,
    cache: Option<HashMap<(u32, u32), Option<Gt>>>,
}

impl Walker<'_> {
    /// `e(g1, g2)^{r * value}` for one instance, if the key reaches it.
    fn eval(&mut self, node: u32, instance: u32) -> Option<Gt> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&(node, instance))) {
            return *hit;
        }
        let value = match &self.ct.dag.nodes()[node as usize].kind {
            NodeKind::Attribute(attr) => self.key.attrs.get(attr).map(|k| {
                let pair = &self.ct.attribute_pairs[node as usize][instance as usize];
                // e(D_j, C_hat) / e(C_hat', D_j')
                self.counter
                    .multi_pairing(&[k.d, -pair.c_hat_prime], &[pair.c_hat, k.d_prime])
            }),
            NodeKind::Link { gate, children } => {
                let (gate, children) = (*gate, *children);
                let inst = self.ct.link_instances[node as usize][instance as usize].children;
                if children[0] == children[1] {
                    self.eval(children[0].0, inst[0])
                } else {
                    match gate {
                        Gate::Or => self
                            .eval(children[0].0, inst[0])
                            .or_else(|| self.eval(children[1].0, inst[1])),
                        Gate::And => {
                            let left = self.eval(children[0].0, inst[0]);
                            let right = left.and_then(|_| self.eval(children[1].0, inst[1]));
                            match (left, right) {
                                (Some(l), Some(r)) => {
                                    let (x0, x1) = (self.index[children[0].0 as usize], self.index[children[1].0 as usize]);
                                    group::lagrange_at_zero(x0, x1).map(|(l0, l1)| l * l0 + r * l1)
                                }
                                _ => None,
                            }
                        }
                    }
                }
            }
        };
        if let Some(c) = self.cache.as_mut() {
            c.insert((node, instance), value);
        }
        value
    }
}
