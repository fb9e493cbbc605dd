//! Declarative broker scenarios.
//!
//! A scenario is a TOML file with optional top-level `seed`, `will` (path
//! relative to the scenario, defaulting to the bundled golden will),
//! `heir_salt` and `authority_seed`, followed by `[[step]]` tables:
//!
//! ```toml
//! [[step]]
//! op = "vote"
//! heir = "bob"
//! expect = "IllegalState"   # optional; the step must then fail this way
//! ```
//!
//! Ops: deploy, update, delete, request, vote, veto, override, advance,
//! tick, execute, retrieve, fault, adapter_offline, assert_state,
//! assert_clean. The run fails on any unexpected error, any expected error
//! that does not occur and any failed assertion.

use std::fs;
use std::path::{Path, PathBuf};

use heirloom_core::broker::{Broker, BrokerConfig, BrokerError, ExecutionReport, FixtureAdapter, TransitionError, WillState};
use heirloom_core::demo;
use heirloom_core::keyvault::{self, AuthorityKey};
use heirloom_core::willfile::{parse_xml, DigitalWill};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("step {step} ({op}): {message}")]
    Step { step: usize, op: String, message: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub will: Option<PathBuf>,
    pub heir_salt: Option<String>,
    #[serde(default = "default_authority_seed")]
    pub authority_seed: u64,
    #[serde(rename = "step", default)]
    pub steps: Vec<Step>,
}

fn default_authority_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub op: String,
    pub heir: Option<String>,
    pub creator: Option<String>,
    pub password: Option<String>,
    pub ms: Option<u64>,
    pub provider: Option<String>,
    pub platform: Option<String>,
    pub unavailable: Option<bool>,
    pub corrupting: Option<bool>,
    pub slow_ms: Option<u64>,
    pub state: Option<String>,
    pub will: Option<PathBuf>,
    /// Assets a retrieve must recover, exactly.
    pub recovers: Option<Vec<String>>,
    pub vote_threshold: Option<u32>,
    pub expect: Option<String>,
}

/// One line of the run log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub op: String,
    pub outcome: String,
    pub state: Option<String>,
}

pub struct ScenarioOutcome {
    pub log: Vec<StepRecord>,
    pub broker: Broker,
    pub will_id: String,
    pub executions: Vec<ExecutionReport>,
}

impl ScenarioOutcome {
    pub fn final_state(&self) -> Option<WillState> {
        self.broker.state(&self.will_id)
    }

    /// Writes the ledger, the run log, the execution reports and the
    /// inspector findings into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("ledger.dwchain"), self.broker.ledger().to_text())?;
        let findings: Vec<String> = self
            .broker
            .inspect()
            .iter()
            .map(|f| format!("#{} {:?} {:?}: {}", f.seq, f.rule, f.severity, f.description))
            .collect();
        let report = serde_json::json!({
            "will_id": self.will_id,
            "final_state": self.final_state(),
            "steps": self.log,
            "executions": self.executions,
            "findings": findings,
        });
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report serialises"))
    }
}

pub fn load(path: &Path) -> Result<(Scenario, PathBuf), ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let scenario = toml::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((scenario, base))
}

fn read_will(base: &Path, path: Option<&PathBuf>) -> Result<DigitalWill, String> {
    match path {
        None => Ok(demo::golden_will()),
        Some(p) => {
            let full = base.join(p);
            let bytes = fs::read(&full).map_err(|e| format!("{}: {e}", full.display()))?;
            parse_xml(&bytes).map_err(|e| e.to_string())
        }
    }
}

fn error_name(e: &BrokerError) -> &'static str {
    match e {
        BrokerError::Transition(t) => match t {
            TransitionError::IllegalState(_) => "IllegalState",
            TransitionError::NotAnHeir(_) => "NotAnHeir",
            TransitionError::DuplicateVote(_) => "DuplicateVote",
            TransitionError::FreezeExpired => "FreezeExpired",
            TransitionError::AuthError => "AuthError",
            TransitionError::OverrideNotAllowed => "OverrideNotAllowed",
            TransitionError::WillIdChanged => "WillIdChanged",
        },
        BrokerError::UnknownWill(_) => "UnknownWill",
        BrokerError::DuplicateWill(_) => "DuplicateWill",
        BrokerError::Validation(_) => "Validation",
        BrokerError::BadAttestation => "BadAttestation",
        BrokerError::NoAuthority => "NoAuthority",
        BrokerError::StorageFailure { .. } => "StorageFailure",
        BrokerError::ThresholdNotMet { .. } => "ThresholdNotMet",
        BrokerError::AuthError(_) => "AuthError",
        BrokerError::Crypto(_) => "Crypto",
        BrokerError::Ledger(_) => "Ledger",
    }
}

fn parse_state(s: &str) -> Option<WillState> {
    use WillState::*;
    [Deployed, VotingOpen, Frozen, Activated, Executed, Cancelled]
        .into_iter()
        .find(|w| w.to_string() == s)
}

enum StepResult {
    Done(String),
    Broker(BrokerError),
}

/// Runs `scenario` against a fresh demo broker. `base` resolves relative
/// will paths.
pub fn run(scenario: &Scenario, base: &Path) -> Result<ScenarioOutcome, ScenarioError> {
    let authority = AuthorityKey::generate(&mut ChaCha20Rng::seed_from_u64(scenario.authority_seed));
    let broker = demo::broker(BrokerConfig {
        seed: Some(scenario.seed),
        authority: Some(authority.verifying_key()),
        start_ms: 0,
    });
    let will = read_will(base, scenario.will.as_ref()).map_err(|message| ScenarioError::Step {
        step: 0,
        op: "load".into(),
        message,
    })?;
    let salt = scenario.heir_salt.as_deref().map_or(demo::HEIR_SALT, str::as_bytes);
    let mut out = ScenarioOutcome {
        log: Vec::new(),
        broker,
        will_id: will.will_id.clone(),
        executions: Vec::new(),
    };

    for (i, step) in scenario.steps.iter().enumerate() {
        let n = i + 1;
        let fail = |message: String| ScenarioError::Step {
            step: n,
            op: step.op.clone(),
            message,
        };
        let need = |v: &Option<String>, what: &str| v.clone().ok_or_else(|| fail(format!("missing `{what}`")));
        let b = &mut out.broker;
        let id = out.will_id.as_str();
        let lift = |r: Result<WillState, BrokerError>| match r {
            Ok(s) => StepResult::Done(s.to_string()),
            Err(e) => StepResult::Broker(e),
        };
        let result = match step.op.as_str() {
            "deploy" => match b.deploy(will.clone()) {
                Ok(_) => StepResult::Done("deployed".into()),
                Err(e) => StepResult::Broker(e),
            },
            "update" => {
                let mut w = read_will(base, step.will.as_ref().or(scenario.will.as_ref())).map_err(fail)?;
                if let Some(t) = step.vote_threshold {
                    w.trigger.vote_threshold = t;
                }
                match b.update_will(id, w) {
                    Ok(v) => StepResult::Done(format!("version {v}")),
                    Err(e) => StepResult::Broker(e),
                }
            }
            "delete" => lift(b.delete_will(id)),
            "request" => lift(b.request_trigger(id, &need(&step.heir, "heir")?)),
            "vote" => lift(b.vote(id, &need(&step.heir, "heir")?)),
            "veto" => {
                let creator = step.creator.clone().unwrap_or_else(|| will.creator_id.clone());
                lift(b.veto(id, &creator))
            }
            "override" => lift(b.authority_override(id, &authority.attest_override(id))),
            "advance" | "tick" => {
                let ms = step.ms.ok_or_else(|| fail("missing `ms`".into()))?;
                let changed = if step.op == "advance" { b.advance(ms) } else { b.tick(ms) };
                StepResult::Done(format!("now {} ms, {} activated", b.now(), changed.len()))
            }
            "execute" => match b.execute(id) {
                Ok(r) => {
                    let msg = format!("{} shares placed, {} keys", r.shares_placed, r.keys_distributed.len());
                    out.executions.push(r);
                    StepResult::Done(msg)
                }
                Err(e) => StepResult::Broker(e),
            },
            "retrieve" => {
                let heir = need(&step.heir, "heir")?;
                let password = match &step.password {
                    Some(p) => p.clone(),
                    None => demo::HEIR_PASSWORDS
                        .iter()
                        .find(|(h, _)| *h == heir)
                        .map(|(_, p)| p.to_string())
                        .ok_or_else(|| fail(format!("no password for {heir}")))?,
                };
                let kp = keyvault::derive_keypair(&password, salt).map_err(|e| fail(e.to_string()))?;
                match b.retrieve(id, &heir, &kp.sk) {
                    Ok(r) => {
                        let got: Vec<String> = r.recovered().keys().map(|s| s.to_string()).collect();
                        if let Some(want) = &step.recovers {
                            let mut want = want.clone();
                            want.sort();
                            if got != want {
                                return Err(fail(format!("recovered {got:?}, expected {want:?}")));
                            }
                        }
                        StepResult::Done(format!("recovered {}", got.join(" ")))
                    }
                    Err(e) => StepResult::Broker(e),
                }
            }
            "fault" => {
                let loc = need(&step.provider, "provider")?;
                let p = b.provider_mut(&loc).ok_or_else(|| fail(format!("no provider {loc}")))?;
                if let Some(v) = step.unavailable {
                    p.faults.unavailable = v;
                }
                if let Some(v) = step.corrupting {
                    p.faults.corrupting = v;
                }
                if let Some(v) = step.slow_ms {
                    p.faults.slow_ms = v;
                }
                StepResult::Done(format!("{loc}: {:?}", p.faults))
            }
            "adapter_offline" => {
                let platform = need(&step.platform, "platform")?;
                let mut a = FixtureAdapter::standard_set()
                    .into_iter()
                    .find(|a| heirloom_core::broker::PlatformAdapter::platform_id(a) == platform)
                    .ok_or_else(|| fail(format!("no adapter {platform}")))?;
                a.offline = true;
                b.add_adapter(a);
                StepResult::Done(format!("{platform} offline"))
            }
            "assert_state" => {
                let want = need(&step.state, "state")?;
                let want_state = parse_state(&want).ok_or_else(|| fail(format!("unknown state {want}")))?;
                let got = b.state(id);
                if got != Some(want_state) {
                    return Err(fail(format!("state is {got:?}, expected {want}")));
                }
                StepResult::Done(want)
            }
            "assert_clean" => {
                if let Err(seq) = b.ledger().verify() {
                    return Err(fail(format!("ledger corrupt at entry {seq}")));
                }
                let findings = b.inspect();
                if !findings.is_empty() {
                    return Err(fail(format!("{} inspector findings: {findings:?}", findings.len())));
                }
                StepResult::Done("ledger verified, no findings".into())
            }
            other => return Err(fail(format!("unknown op `{other}`"))),
        };

        let outcome = match (result, &step.expect) {
            (StepResult::Done(msg), None) => msg,
            (StepResult::Done(msg), Some(want)) => {
                return Err(fail(format!("expected {want}, but the step succeeded ({msg})")));
            }
            (StepResult::Broker(e), None) => return Err(fail(e.to_string())),
            (StepResult::Broker(e), Some(want)) if error_name(&e) == want => format!("expected {want}: {e}"),
            (StepResult::Broker(e), Some(want)) => {
                return Err(fail(format!("expected {want}, got {}: {e}", error_name(&e))));
            }
        };
        out.log.push(StepRecord {
            step: n,
            op: step.op.clone(),
            outcome,
            state: out.broker.state(&out.will_id).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

/// Parses and runs scenario text, resolving paths against `base`.
pub fn run_str(text: &str, base: &Path) -> Result<ScenarioOutcome, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    run(&scenario, base)
}
