//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: partial decryption of a multi-file
//! ciphertext, Shamir split and combine, and a step-by-step run of the
//! golden will through a simulated broker. Each returns JSON.

use std::collections::BTreeMap;

use heirloom_core::broker::{Broker, BrokerConfig};
use heirloom_core::group::SECURITY_BITS;
use heirloom_core::keyvault::HeirKeypair;
use heirloom_core::pdcpabe::{self, PlainItem};
use heirloom_core::policy::{attribute_set, parse_policy};
use heirloom_core::{demo, sharding};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct FileOutcome {
    pub name: String,
    pub policy: String,
    pub recovered: bool,
    pub text: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct PartialOutcome {
    pub files: Vec<FileOutcome>,
    pub dag_nodes: usize,
    pub standalone_nodes: usize,
    pub attribute_pairs: usize,
    pub pairings: usize,
    pub ciphertext_bytes: usize,
}

/// `files` holds one `name: policy` per line; `attrs` is comma separated.
pub fn partial_decryption(files: &str, attrs: &str, seed: u64) -> Result<PartialOutcome, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut standalone_nodes = 0;
    for (n, line) in files.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (name, policy) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `name: policy`", n + 1))?;
        let policy = parse_policy(policy.trim()).map_err(|e| format!("line {}: {e}", n + 1))?;
        standalone_nodes += policy.node_count();
        let name = name.trim().to_string();
        let body = format!("contents of {name}");
        items.push(PlainItem::new(name, body.into_bytes(), policy));
    }
    let attrs = attribute_set(attrs.split(',').map(str::trim).filter(|a| !a.is_empty())).map_err(|e| e.to_string())?;
    let (pp, mk) = pdcpabe::setup(SECURITY_BITS, &mut rng).map_err(|e| e.to_string())?;
    let key = pdcpabe::keygen(&mk, &attrs, &mut rng).map_err(|e| e.to_string())?;
    let ct = pdcpabe::encrypt(&pp, &items, &mut rng).map_err(|e| e.to_string())?;
    let report = pdcpabe::decrypt(&pp, &key, &ct).map_err(|e| e.to_string())?;
    let files = items
        .iter()
        .map(|i| FileOutcome {
            name: i.id.clone(),
            policy: i.policy.to_string(),
            recovered: report.recovered.contains_key(&i.id),
            text: report.recovered.get(&i.id).map(|b| String::from_utf8_lossy(b).into_owned()),
        })
        .collect();
    Ok(PartialOutcome {
        files,
        dag_nodes: ct.dag.node_count(),
        standalone_nodes,
        attribute_pairs: ct.attribute_pair_count(),
        pairings: report.pairings,
        ciphertext_bytes: ct.to_bytes().len(),
    })
}

#[derive(Debug, Serialize)]
pub struct ShamirOutcome {
    pub threshold: usize,
    pub shares: Vec<String>,
    pub used: Vec<u8>,
    pub reconstructed: Option<String>,
    pub error: Option<String>,
}

/// Splits `secret` into `n` shares and combines the ones listed in `use_ids`.
pub fn shamir(secret: &str, n: usize, t: usize, use_ids: &[u8], seed: u64) -> Result<ShamirOutcome, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let shares = sharding::split("demo", secret.as_bytes(), n, t, &mut rng).map_err(|e| e.to_string())?;
    let chosen: Vec<_> = shares.iter().filter(|s| use_ids.contains(&s.share_id)).cloned().collect();
    let (reconstructed, error) = match sharding::combine(&chosen) {
        Ok(bytes) => (Some(String::from_utf8_lossy(&bytes).into_owned()), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ShamirOutcome {
        threshold: t,
        shares: shares.iter().map(|s| s.payload.iter().map(|b| format!("{b:02x}")).collect()).collect(),
        used: chosen.iter().map(|s| s.share_id).collect(),
        reconstructed,
        error,
    })
}

/// The golden will under a simulated broker.
pub struct EstateSim {
    broker: Broker,
    keys: BTreeMap<String, HeirKeypair>,
}

#[derive(Debug, Serialize)]
pub struct EstateView {
    pub state: String,
    pub now_days: f64,
    pub message: String,
    pub ledger: Vec<String>,
}

const WILL: &str = "will-golden";
const DAY_MS: u64 = 86_400_000;

impl EstateSim {
    pub fn new(seed: u64) -> Self {
        let mut broker = demo::broker(BrokerConfig {
            seed: Some(seed),
            ..BrokerConfig::default()
        });
        broker.deploy(demo::golden_will()).expect("fixture deploys");
        Self {
            broker,
            keys: BTreeMap::new(),
        }
    }

    fn view(&self, message: String) -> EstateView {
        EstateView {
            state: self.broker.state(WILL).map_or("unknown".into(), |s| s.to_string()),
            now_days: self.broker.now() as f64 / DAY_MS as f64,
            message,
            ledger: self
                .broker
                .ledger()
                .entries()
                .iter()
                .map(|e| format!("#{} {} {} by {}", e.seq, e.action, e.subject, e.actor))
                .collect(),
        }
    }

    fn outcome<T>(&self, r: Result<T, impl std::fmt::Display>, ok: impl FnOnce(T) -> String) -> EstateView {
        let msg = match r {
            Ok(v) => ok(v),
            Err(e) => format!("rejected: {e}"),
        };
        self.view(msg)
    }

    pub fn status(&self) -> EstateView {
        self.view("ready".into())
    }

    pub fn vote(&mut self, heir: &str) -> EstateView {
        let r = self.broker.vote(WILL, heir);
        self.outcome(r, |s| format!("{heir} voted; will is {s}"))
    }

    pub fn veto(&mut self, creator: &str) -> EstateView {
        let r = self.broker.veto(WILL, creator);
        self.outcome(r, |s| format!("veto accepted; will is {s}"))
    }

    pub fn advance_days(&mut self, days: u32) -> EstateView {
        let changed = self.broker.advance(u64::from(days) * DAY_MS);
        let msg = if changed.is_empty() {
            format!("{days} days pass")
        } else {
            format!("{days} days pass; freeze over, will activated")
        };
        self.view(msg)
    }

    pub fn execute(&mut self) -> EstateView {
        let r = self.broker.execute(WILL);
        self.outcome(r, |rep| {
            format!(
                "pulled {} platforms, placed {} shares, sealed keys for {}",
                rep.platforms_pulled.len(),
                rep.shares_placed,
                rep.keys_distributed.join(", ")
            )
        })
    }

    pub fn retrieve(&mut self, heir: &str) -> EstateView {
        if !self.keys.contains_key(heir) {
            match demo::heir_keypair(heir) {
                Ok(kp) => {
                    self.keys.insert(heir.to_string(), kp);
                }
                Err(e) => return self.view(format!("rejected: {e}")),
            }
        }
        let sk = self.keys[heir].sk.clone();
        let r = self.broker.retrieve(WILL, heir, &sk);
        self.outcome(r, |rep| {
            let got: Vec<&str> = rep.recovered().into_keys().collect();
            let denied = rep.denied();
            format!("{heir} recovered [{}]; denied [{}]", got.join(", "), denied.join(", "))
        })
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("views serialise")
}

#[wasm_bindgen(js_name = partialDecryption)]
pub fn partial_decryption_js(files: &str, attrs: &str, seed: f64) -> Result<String, JsError> {
    partial_decryption(files, attrs, seed as u64)
        .map(|o| to_json(&o))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = shamir)]
pub fn shamir_js(secret: &str, n: usize, t: usize, use_ids: &[u8], seed: f64) -> Result<String, JsError> {
    shamir(secret, n, t, use_ids, seed as u64)
        .map(|o| to_json(&o))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = Estate)]
pub struct EstateJs(EstateSim);

#[wasm_bindgen(js_class = Estate)]
impl EstateJs {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: f64) -> EstateJs {
        EstateJs(EstateSim::new(seed as u64))
    }

    pub fn status(&self) -> String {
        to_json(&self.0.status())
    }

    pub fn vote(&mut self, heir: &str) -> String {
        to_json(&self.0.vote(heir))
    }

    pub fn veto(&mut self, creator: &str) -> String {
        to_json(&self.0.veto(creator))
    }

    #[wasm_bindgen(js_name = advanceDays)]
    pub fn advance_days(&mut self, days: u32) -> String {
        to_json(&self.0.advance_days(days))
    }

    pub fn execute(&mut self) -> String {
        to_json(&self.0.execute())
    }

    pub fn retrieve(&mut self, heir: &str) -> String {
        to_json(&self.0.retrieve(heir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_decryption_reports_each_file() {
        let files = "will.pdf: (spouse and executor)\nphotos: (family or friend)\nnotes: friend\n";
        let out = partial_decryption(files, "family", 1).unwrap();
        let got: Vec<(&str, bool)> = out.files.iter().map(|f| (f.name.as_str(), f.recovered)).collect();
        assert_eq!(got, [("will.pdf", false), ("photos", true), ("notes", false)]);
        assert_eq!(out.files[1].text.as_deref(), Some("contents of photos"));
        assert_eq!(out.standalone_nodes, 7);
        assert!(partial_decryption("no colon", "a", 1).is_err());
    }

    #[test]
    fn shamir_needs_the_threshold() {
        let ok = shamir("hello", 5, 3, &[1, 4, 5], 2).unwrap();
        assert_eq!(ok.reconstructed.as_deref(), Some("hello"));
        assert_eq!(ok.shares.len(), 5);
        let short = shamir("hello", 5, 3, &[2, 3], 2).unwrap();
        assert!(short.reconstructed.is_none() && short.error.is_some());
    }

    #[test]
    fn estate_walkthrough() {
        let mut e = EstateSim::new(3);
        assert_eq!(e.vote("bob").state, "VotingOpen");
        assert!(e.vote("bob").message.starts_with("rejected"));
        assert_eq!(e.vote("carol").state, "Frozen");
        assert!(e.execute().message.starts_with("rejected"));
        assert_eq!(e.advance_days(7).state, "Activated");
        assert_eq!(e.execute().state, "Executed");
        let v = e.retrieve("carol");
        assert!(v.message.contains("recovered [cloud/photos, social/posts]"), "{}", v.message);
        assert!(v.ledger.iter().any(|l| l.contains("RetrieveShares")));
    }
}
