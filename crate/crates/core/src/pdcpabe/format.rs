//! Binary container format.
//!
//! ```text
//! header   "PDCPABE1" | u16 version | u8 curve | u8 kind
//! section  u32 length | bytes            (ciphertext: dag, data nodes,
//!                                         instances, attribute pairs,
//!                                         payloads)
//! ```
//!
//! Group elements use compressed encodings: G1 48 bytes, G2 96, GT 576.

use std::collections::BTreeMap;

use super::{
    AttributeCiphertextPair, AttributeKey, Ciphertext, DataNodeCiphertext, EncryptedPayload, LinkInstance, MasterKey, Origin,
    PdError, PublicParams, UserKey,
};
use crate::codec::{read_header, write_header, CodecError, Reader, Writer};
use crate::group::{read_g1, read_g2, read_gt, read_scalar, write_g1, write_g2, write_gt, write_scalar, CURVE_BLS12_381};
use crate::policy::{AttributeName, IntegratedAccessDag, NodeId, ParentRef};
use crate::symmetric::NONCE_LEN;

pub const MAGIC: &[u8; 8] = b"PDCPABE1";
pub const VERSION: u16 = 1;

const KIND_CIPHERTEXT: u8 = 1;
const KIND_PUBLIC_PARAMS: u8 = 2;
const KIND_MASTER_KEY: u8 = 3;
const KIND_USER_KEY: u8 = 4;

fn header(w: &mut Writer, kind: u8) {
    write_header(w, MAGIC, VERSION, CURVE_BLS12_381, kind);
}

fn check_header(r: &mut Reader<'_>, kind: u8) -> Result<(), CodecError> {
    read_header(r, MAGIC, VERSION, CURVE_BLS12_381, kind)
}

fn write_origin(w: &mut Writer, o: &Origin) {
    match o.parent {
        ParentRef::Data(i) => w.u8(0).u32(i as u32),
        ParentRef::Node(n) => w.u8(1).u32(n.0),
    };
    w.u32(o.parent_instance);
}

fn read_origin(r: &mut Reader<'_>) -> Result<Origin, CodecError> {
    let parent = match r.u8()? {
        0 => ParentRef::Data(r.u32()? as usize),
        1 => ParentRef::Node(NodeId(r.u32()?)),
        t => return Err(CodecError::Invalid(format!("origin tag {t}"))),
    };
    Ok(Origin {
        parent,
        parent_instance: r.u32()?,
    })
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        header(&mut w, KIND_CIPHERTEXT);
        w.section(|s| {
            s.raw(&self.index_seed).str(&self.dag.dump());
        });
        w.section(|s| {
            s.u32(self.data_nodes.len() as u32);
            for d in &self.data_nodes {
                write_gt(s, &d.c);
                write_g1(s, &d.c1);
                write_g1(s, &d.c2);
                write_g1(s, &d.c3);
                s.u32(d.root_instance);
            }
        });
        w.section(|s| {
            s.u32(self.link_instances.len() as u32);
            for per_node in &self.link_instances {
                s.u32(per_node.len() as u32);
                for inst in per_node {
                    s.u32(inst.children[0]).u32(inst.children[1]);
                    write_origin(s, &inst.origin);
                }
            }
        });
        w.section(|s| {
            s.u32(self.attribute_pairs.len() as u32);
            for per_node in &self.attribute_pairs {
                s.u32(per_node.len() as u32);
                for pair in per_node {
                    write_g2(s, &pair.c_hat);
                    write_g1(s, &pair.c_hat_prime);
                    write_origin(s, &pair.origin);
                }
            }
        });
        w.section(|s| {
            s.u32(self.payloads.len() as u32);
            for p in &self.payloads {
                s.str(&p.payload_id).u32(p.group).raw(&p.nonce).bytes(&p.ciphertext);
            }
        });
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PdError> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, KIND_CIPHERTEXT)?;

        let mut s = r.section()?;
        let index_seed: [u8; 32] = s.raw(32)?.try_into().unwrap();
        let dag = IntegratedAccessDag::from_dump(s.str()?)?;
        s.finish()?;

        let mut s = r.section()?;
        let n = s.count(576 + 3 * 48 + 4)?;
        let mut data_nodes = Vec::with_capacity(n);
        for _ in 0..n {
            data_nodes.push(DataNodeCiphertext {
                c: read_gt(&mut s)?,
                c1: read_g1(&mut s)?,
                c2: read_g1(&mut s)?,
                c3: read_g1(&mut s)?,
                root_instance: s.u32()?,
            });
        }
        s.finish()?;

        let mut s = r.section()?;
        let n = s.count(4)?;
        let mut link_instances = Vec::with_capacity(n);
        for _ in 0..n {
            let m = s.count(17)?;
            let mut per_node = Vec::with_capacity(m);
            for _ in 0..m {
                let children = [s.u32()?, s.u32()?];
                per_node.push(LinkInstance {
                    children,
                    origin: read_origin(&mut s)?,
                });
            }
            link_instances.push(per_node);
        }
        s.finish()?;

        let mut s = r.section()?;
        let n = s.count(4)?;
        let mut attribute_pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let m = s.count(96 + 48 + 9)?;
            let mut per_node = Vec::with_capacity(m);
            for _ in 0..m {
                per_node.push(AttributeCiphertextPair {
                    c_hat: read_g2(&mut s)?,
                    c_hat_prime: read_g1(&mut s)?,
                    origin: read_origin(&mut s)?,
                });
            }
            attribute_pairs.push(per_node);
        }
        s.finish()?;

        let mut s = r.section()?;
        let n = s.count(4 + 4 + NONCE_LEN + 4)?;
        let mut payloads = Vec::with_capacity(n);
        for _ in 0..n {
            payloads.push(EncryptedPayload {
                payload_id: s.str()?.to_string(),
                group: s.u32()?,
                nonce: s.raw(NONCE_LEN)?.try_into().unwrap(),
                ciphertext: s.bytes()?.to_vec(),
            });
        }
        s.finish()?;
        r.finish()?;

        let ct = Ciphertext {
            dag,
            index_seed,
            data_nodes,
            link_instances,
            attribute_pairs,
            payloads,
        };
        ct.validate()?;
        Ok(ct)
    }
}

impl PublicParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        header(&mut w, KIND_PUBLIC_PARAMS);
        write_g1(&mut w, &self.f1);
        write_g1(&mut w, &self.f2);
        write_g1(&mut w, &self.f3);
        write_gt(&mut w, &self.egg_alpha);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PdError> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, KIND_PUBLIC_PARAMS)?;
        let pp = PublicParams {
            f1: read_g1(&mut r)?,
            f2: read_g1(&mut r)?,
            f3: read_g1(&mut r)?,
            egg_alpha: read_gt(&mut r)?,
        };
        r.finish()?;
        Ok(pp)
    }
}

impl MasterKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        header(&mut w, KIND_MASTER_KEY);
        write_g2(&mut w, &self.g_alpha);
        write_scalar(&mut w, &self.beta1);
        write_scalar(&mut w, &self.beta2);
        write_scalar(&mut w, &self.beta3);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PdError> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, KIND_MASTER_KEY)?;
        let mk = MasterKey {
            g_alpha: read_g2(&mut r)?,
            beta1: read_scalar(&mut r)?,
            beta2: read_scalar(&mut r)?,
            beta3: read_scalar(&mut r)?,
        };
        r.finish()?;
        Ok(mk)
    }
}

impl UserKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        header(&mut w, KIND_USER_KEY);
        write_g2(&mut w, &self.d1);
        write_g2(&mut w, &self.d3);
        w.u32(self.attrs.len() as u32);
        for (name, k) in &self.attrs {
            w.str(name.as_str());
            write_g1(&mut w, &k.d);
            write_g2(&mut w, &k.d_prime);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PdError> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, KIND_USER_KEY)?;
        let d1 = read_g2(&mut r)?;
        let d3 = read_g2(&mut r)?;
        let n = r.count(4 + 48 + 96)?;
        let mut attrs = BTreeMap::new();
        for _ in 0..n {
            let name = AttributeName::new(r.str()?)?;
            let k = AttributeKey {
                d: read_g1(&mut r)?,
                d_prime: read_g2(&mut r)?,
            };
            attrs.insert(name, k);
        }
        r.finish()?;
        Ok(UserKey { d1, d3, attrs })
    }
}
