//! Append-only, hash-chained broker action log and the behaviour inspector
//! that replays it against the workflow rules.
//!
//! Entry hashes are SHA-256 over
//! `seq u64 | timestamp u64 | actor | action u8 | subject | payload digest | prev hash`
//! with strings length-prefixed (u32, big-endian). The genesis entry links to
//! 32 zero bytes.
//!
//! On disk the chain is a header line followed by one tab-separated line per
//! entry:
//!
//! ```text
//! DWCHAIN1 sha256
//! seq  timestamp_ms  actor  action  subject  payload_digest  prev_hash  entry_hash
//! ```
//!
//! Hashes are lowercase hex; `\`, tab and newline in identifiers are
//! backslash-escaped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CHAIN_MAGIC: &str = "DWCHAIN1";
const HEADER: &str = "DWCHAIN1 sha256";

pub type Hash = [u8; 32];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("chain corrupt at seq {0}")]
    ChainCorrupt(u64),
    #[error("malformed chain file at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    DeployWill,
    UpdateWill,
    DeleteWill,
    TriggerRequest,
    VoteCast,
    FreezeStart,
    Veto,
    AuthorityOverride,
    Activate,
    PullData,
    EncryptData,
    SplitUpload,
    KeyDistribute,
    RetrieveShares,
    /// Non-fatal anomaly such as a duplicate vote or an unavailable provider.
    Warning,
}

impl Action {
    pub const ALL: [Action; 15] = [
        Action::DeployWill,
        Action::UpdateWill,
        Action::DeleteWill,
        Action::TriggerRequest,
        Action::VoteCast,
        Action::FreezeStart,
        Action::Veto,
        Action::AuthorityOverride,
        Action::Activate,
        Action::PullData,
        Action::EncryptData,
        Action::SplitUpload,
        Action::KeyDistribute,
        Action::RetrieveShares,
        Action::Warning,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::DeployWill => "DeployWill",
            Action::UpdateWill => "UpdateWill",
            Action::DeleteWill => "DeleteWill",
            Action::TriggerRequest => "TriggerRequest",
            Action::VoteCast => "VoteCast",
            Action::FreezeStart => "FreezeStart",
            Action::Veto => "Veto",
            Action::AuthorityOverride => "AuthorityOverride",
            Action::Activate => "Activate",
            Action::PullData => "PullData",
            Action::EncryptData => "EncryptData",
            Action::SplitUpload => "SplitUpload",
            Action::KeyDistribute => "KeyDistribute",
            Action::RetrieveShares => "RetrieveShares",
            Action::Warning => "Warning",
        }
    }

    /// Data-handling steps that may only follow activation.
    pub fn is_post_activation(self) -> bool {
        matches!(
            self,
            Action::PullData | Action::EncryptData | Action::SplitUpload | Action::KeyDistribute
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub actor: String,
    pub action: Action,
    pub subject: String,
    pub payload_digest: Hash,
    pub prev_hash: Hash,
    pub entry_hash: Hash,
}

impl LogEntry {
    pub fn compute_hash(&self) -> Hash {
        let mut h = Sha256::new();
        h.update(self.seq.to_be_bytes());
        h.update(self.timestamp_ms.to_be_bytes());
        h.update((self.actor.len() as u32).to_be_bytes());
        h.update(self.actor.as_bytes());
        h.update([self.action.code()]);
        h.update((self.subject.len() as u32).to_be_bytes());
        h.update(self.subject.as_bytes());
        h.update(self.payload_digest);
        h.update(self.prev_hash);
        h.finalize().into()
    }
}

pub fn digest(payload: &[u8]) -> Hash {
    Sha256::digest(payload).into()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chain {
    entries: Vec<LogEntry>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps entries from an untrusted source; nothing is checked until
    /// [`Chain::verify`] or the next append.
    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Raw access for tamper simulations.
    pub fn entries_mut(&mut self) -> &mut Vec<LogEntry> {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tip_hash(&self) -> Hash {
        self.entries.last().map_or([0; 32], |e| e.entry_hash)
    }

    pub fn append(&mut self, timestamp_ms: u64, actor: &str, action: Action, subject: &str, payload: &[u8]) -> Result<&LogEntry, LedgerError> {
        self.verify().map_err(LedgerError::ChainCorrupt)?;
        let mut entry = LogEntry {
            seq: self.entries.len() as u64,
            timestamp_ms,
            actor: actor.to_string(),
            action,
            subject: subject.to_string(),
            payload_digest: digest(payload),
            prev_hash: self.tip_hash(),
            entry_hash: [0; 32],
        };
        entry.entry_hash = entry.compute_hash();
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Position of the earliest entry whose sequence number, link or hash is
    /// wrong.
    pub fn verify(&self) -> Result<(), u64> {
        let mut prev = [0u8; 32];
        for (i, e) in self.entries.iter().enumerate() {
            if e.seq != i as u64 || e.prev_hash != prev || e.compute_hash() != e.entry_hash {
                return Err(i as u64);
            }
            prev = e.entry_hash;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.seq,
                e.timestamp_ms,
                escape(&e.actor),
                e.action,
                escape(&e.subject),
                hex::encode(e.payload_digest),
                hex::encode(e.prev_hash),
                hex::encode(e.entry_hash)
            ));
        }
        out
    }

    /// Parses the persisted form. Hash links are not checked here; call
    /// [`Chain::verify`].
    pub fn from_text(text: &str) -> Result<Self, LedgerError> {
        let bad = |line: usize, message: String| LedgerError::Malformed { line, message };
        let body = text
            .strip_suffix('\n')
            .ok_or_else(|| bad(0, "missing final newline".into()))?;
        let mut lines = body.split('\n');
        if lines.next() != Some(HEADER) {
            return Err(bad(1, format!("expected header {HEADER:?}")));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(bad(n, format!("expected 8 fields, found {}", f.len())));
            }
            let number = |s: &str| -> Result<u64, LedgerError> {
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
                    return Err(bad(n, format!("bad number {s:?}")));
                }
                s.parse().map_err(|_| bad(n, format!("bad number {s:?}")))
            };
            let hash = |s: &str| -> Result<Hash, LedgerError> {
                if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                    return Err(bad(n, format!("bad hash {s:?}")));
                }
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out).map_err(|e| bad(n, e.to_string()))?;
                Ok(out)
            };
            entries.push(LogEntry {
                seq: number(f[0])?,
                timestamp_ms: number(f[1])?,
                actor: unescape(f[2]).ok_or_else(|| bad(n, "bad escape in actor".into()))?,
                action: f[3].parse().map_err(|m| bad(n, m))?,
                subject: unescape(f[4]).ok_or_else(|| bad(n, "bad escape in subject".into()))?,
                payload_digest: hash(f[5])?,
                prev_hash: hash(f[6])?,
                entry_hash: hash(f[7])?,
            });
        }
        Ok(Chain { entries })
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(match chars.next()? {
                '\\' => '\\',
                't' => '\t',
                'n' => '\n',
                _ => return None,
            });
        } else {
            out.push(c);
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    /// Activation needs enough distinct votes or an authority override.
    R1,
    /// Activation needs a freeze period that has fully elapsed, unless
    /// overridden.
    R2,
    /// Data handling only after activation.
    R3,
    /// A veto during the freeze forbids activation.
    R4,
    /// Inspector could not evaluate a rule.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Halt,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InspectionFinding {
    pub seq: u64,
    pub rule: Rule,
    pub description: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WillParams {
    pub vote_threshold: u32,
    pub freeze_ms: u64,
}

#[derive(Default)]
struct WillTrace {
    voters: BTreeSet<String>,
    overridden: bool,
    freeze_start: Option<u64>,
    vetoed: bool,
    activated: bool,
}

/// Replays the chain against rules R1–R4. Pure: the same chain and
/// parameters always yield the same findings.
pub fn inspect(chain: &Chain, params: &BTreeMap<String, WillParams>) -> Vec<InspectionFinding> {
    let mut findings = Vec::new();
    let mut wills: BTreeMap<&str, WillTrace> = BTreeMap::new();
    for e in chain.entries() {
        let halt = |rule, description: String| InspectionFinding {
            seq: e.seq,
            rule,
            description,
            severity: Severity::Halt,
        };
        let w = wills.entry(e.subject.as_str()).or_default();
        match e.action {
            Action::DeployWill => *w = WillTrace::default(),
            Action::VoteCast => {
                w.voters.insert(e.actor.clone());
            }
            Action::AuthorityOverride => w.overridden = true,
            Action::FreezeStart => w.freeze_start = Some(e.timestamp_ms),
            Action::Veto => {
                if w.freeze_start.is_some() && !w.activated {
                    w.vetoed = true;
                }
            }
            Action::Activate => {
                match params.get(&e.subject) {
                    None => findings.push(InspectionFinding {
                        seq: e.seq,
                        rule: Rule::Unknown,
                        description: format!("no parameters known for will {}", e.subject),
                        severity: Severity::Warn,
                    }),
                    Some(p) if !w.overridden => {
                        if (w.voters.len() as u32) < p.vote_threshold {
                            findings.push(halt(
                                Rule::R1,
                                format!(
                                    "activated with {} of {} required votes and no override",
                                    w.voters.len(),
                                    p.vote_threshold
                                ),
                            ));
                        }
                        match w.freeze_start {
                            None => findings.push(halt(Rule::R2, "activated without a freeze period".into())),
                            Some(start) if e.timestamp_ms < start.saturating_add(p.freeze_ms) => findings.push(halt(
                                Rule::R2,
                                format!(
                                    "activated {} ms into a {} ms freeze",
                                    e.timestamp_ms.saturating_sub(start),
                                    p.freeze_ms
                                ),
                            )),
                            Some(_) => {}
                        }
                    }
                    Some(_) => {}
                }
                if w.vetoed {
                    findings.push(halt(Rule::R4, "activated after a veto".into()));
                }
                w.activated = true;
            }
            a if a.is_post_activation() && !w.activated => {
                findings.push(halt(Rule::R3, format!("{a} before activation")));
            }
            _ => {}
        }
    }
    findings
}
