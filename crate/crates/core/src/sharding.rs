//! Shamir secret sharing over GF(2^8), byte by byte.
//!
//! Every byte of the input is the constant term of its own random polynomial
//! of degree `t - 1`; share `i` holds the evaluations at `x = i`. Shares are
//! therefore exactly as long as the input.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};

pub const SHARE_MAGIC: &[u8; 8] = b"DWSHARE1";
pub const MAX_SHARES: usize = 255;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShardError {
    #[error("at least two storage locations are required, got {0}")]
    TooFewLocations(usize),
    #[error("invalid threshold {t} for {n} shares")]
    InvalidThreshold { n: usize, t: usize },
    #[error("nothing to split")]
    EmptyInput,
    #[error("insufficient shares to reconstruct the file: have {have}, need {need}")]
    ThresholdNotMet { have: usize, need: usize },
    #[error("inconsistent shares: {0}")]
    InconsistentShares(String),
    #[error("duplicate manifest entry for {file_id} share {share_id}")]
    DuplicateEntry { file_id: String, share_id: u8 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// `x^8 + x^4 + x^3 + x + 1`
const REDUCTION: u16 = 0x11B;

fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= (REDUCTION & 0xFF) as u8;
        }
        b >>= 1;
    }
    acc
}

fn gf_inv(a: u8) -> u8 {
    debug_assert_ne!(a, 0);
    // a^254 = a^{-1} in GF(2^8)*
    let mut result = 1u8;
    let mut base = a;
    let mut e = 254u8;
    while e != 0 {
        if e & 1 != 0 {
            result = gf_mul(result, base);
        }
        base = gf_mul(base, base);
        e >>= 1;
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub file_id: String,
    pub share_id: u8,
    pub total: u8,
    pub threshold: u8,
    pub payload: Vec<u8>,
}

impl Share {
    pub fn x_coordinate(&self) -> u8 {
        self.share_id
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(SHARE_MAGIC)
            .str(&self.file_id)
            .u8(self.share_id)
            .u8(self.total)
            .u8(self.threshold)
            .u64(self.payload.len() as u64)
            .raw(&self.payload);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ShardError> {
        let mut r = Reader::new(bytes);
        if r.raw(8)? != SHARE_MAGIC {
            return Err(CodecError::BadMagic {
                expected: String::from_utf8_lossy(SHARE_MAGIC).into_owned(),
            }
            .into());
        }
        let file_id = r.str()?.to_string();
        let (share_id, total, threshold) = (r.u8()?, r.u8()?, r.u8()?);
        let len = r.u64()?;
        if len != r.remaining() as u64 {
            return Err(CodecError::Truncated.into());
        }
        let payload = r.raw(len as usize)?.to_vec();
        r.finish()?;
        if share_id == 0 || share_id > total || threshold == 0 || threshold > total {
            return Err(ShardError::InconsistentShares(format!(
                "share {share_id} of {total} with threshold {threshold}"
            )));
        }
        Ok(Share {
            file_id,
            share_id,
            total,
            threshold,
            payload,
        })
    }
}

/// `ceil(n / 2)`, never below 2.
pub fn default_threshold(n: usize) -> Result<usize, ShardError> {
    if n < 2 {
        return Err(ShardError::TooFewLocations(n));
    }
    Ok(n.div_ceil(2).max(2))
}

pub fn split<R: RngCore + CryptoRng>(file_id: &str, data: &[u8], n: usize, t: usize, rng: &mut R) -> Result<Vec<Share>, ShardError> {
    if data.is_empty() {
        return Err(ShardError::EmptyInput);
    }
    if t < 2 || t > n || n > MAX_SHARES {
        return Err(ShardError::InvalidThreshold { n, t });
    }
    let mut payloads = vec![Vec::with_capacity(data.len()); n];
    let mut coeffs = vec![0u8; t - 1];
    for &secret in data {
        rng.fill_bytes(&mut coeffs);
        for (i, out) in payloads.iter_mut().enumerate() {
            let x = (i + 1) as u8;
            // Horner from the top coefficient down to the secret.
            let y = coeffs.iter().rev().fold(0u8, |acc, &c| gf_mul(acc, x) ^ c);
            out.push(gf_mul(y, x) ^ secret);
        }
    }
    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| Share {
            file_id: file_id.to_string(),
            share_id: (i + 1) as u8,
            total: n as u8,
            threshold: t as u8,
            payload,
        })
        .collect())
}

pub fn combine(shares: &[Share]) -> Result<Vec<u8>, ShardError> {
    let first = shares.first().ok_or(ShardError::ThresholdNotMet { have: 0, need: 2 })?;
    let mut xs = BTreeSet::new();
    for s in shares {
        if s.file_id != first.file_id
            || s.total != first.total
            || s.threshold != first.threshold
            || s.payload.len() != first.payload.len()
        {
            return Err(ShardError::InconsistentShares(format!(
                "share {} of {} disagrees with share {} of {}",
                s.share_id, s.file_id, first.share_id, first.file_id
            )));
        }
        if s.share_id == 0 {
            return Err(ShardError::InconsistentShares("share id 0".into()));
        }
        xs.insert(s.share_id);
    }
    let need = first.threshold as usize;
    if xs.len() < need {
        return Err(ShardError::ThresholdNotMet { have: xs.len(), need });
    }
    // Exactly `threshold` distinct shares determine the polynomial.
    let mut chosen: Vec<&Share> = Vec::with_capacity(need);
    for s in shares {
        if chosen.len() == need {
            break;
        }
        if !chosen.iter().any(|c| c.share_id == s.share_id) {
            chosen.push(s);
        }
    }
    let weights: Vec<u8> = chosen
        .iter()
        .map(|si| {
            let (num, den) = chosen
                .iter()
                .filter(|sj| sj.share_id != si.share_id)
                .fold((1u8, 1u8), |(num, den), sj| {
                    (gf_mul(num, sj.share_id), gf_mul(den, sj.share_id ^ si.share_id))
                });
            gf_mul(num, gf_inv(den))
        })
        .collect();
    let mut out = vec![0u8; first.payload.len()];
    for (s, &w) in chosen.iter().zip(&weights) {
        for (o, &y) in out.iter_mut().zip(&s.payload) {
            *o ^= gf_mul(w, y);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub file_id: String,
    pub share_id: u8,
    pub location_id: String,
}

/// Append-only record of where each share was placed.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShareManifest {
    entries: Vec<ManifestEntry>,
}

impl ShareManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, file_id: &str, share_id: u8, location_id: &str) -> Result<(), ShardError> {
        if self
            .entries
            .iter()
            .any(|e| e.file_id == file_id && e.share_id == share_id)
        {
            return Err(ShardError::DuplicateEntry {
                file_id: file_id.to_string(),
                share_id,
            });
        }
        self.entries.push(ManifestEntry {
            file_id: file_id.to_string(),
            share_id,
            location_id: location_id.to_string(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn for_file<'a>(&'a self, file_id: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.file_id == file_id)
    }

    pub fn file_ids(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.file_id.as_str()) {
                seen.push(e.file_id.as_str());
            }
        }
        seen
    }
}
