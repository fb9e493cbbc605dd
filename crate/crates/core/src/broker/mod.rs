//! The digital will broker: lifecycle, execution pipeline and retrieval.
//!
//! Every operation is stamped with the broker's simulated clock and logged
//! to its hash-chained [`Chain`]; rejected operations leave a `Warning`
//! entry. Execution pulls each platform's assets, encrypts them into one
//! ciphertext per platform, spreads Shamir shares of that ciphertext over
//! the will's storage locations and seals a decryption key to every heir.

pub mod adapters;
pub mod state;
pub mod storage;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use web_time::Instant;

use p256::ecdsa::VerifyingKey;
use p256::SecretKey;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::keyvault::{self, Envelope};
use crate::ledger::{self, Action, Chain, InspectionFinding, LedgerError, WillParams};
use crate::pdcpabe::{self, Ciphertext, DecryptionReport, DenialReason, MasterKey, PdError, PlainItem, PublicParams, UserKey};
use crate::sharding::{self, Share, ShareManifest};
use crate::willfile::{serialize_xml, DigitalWill};

pub use adapters::{AdapterError, Document, FixtureAdapter, PlatformAdapter};
pub use state::{apply, Command, TransitionError, WillRecord, WillState};
pub use storage::{share_file_name, Faults, RequestCounts, StorageError, StorageProvider};

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("unknown will {0}")]
    UnknownWill(String),
    #[error("will {0} is already deployed")]
    DuplicateWill(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("bad attestation")]
    BadAttestation,
    #[error("no authority key configured")]
    NoAuthority,
    #[error("storage failure for {file_id}: {placed} of {needed} required shares placed")]
    StorageFailure { file_id: String, placed: usize, needed: usize },
    #[error("threshold not met for {file_id} after contacting every provider")]
    ThresholdNotMet { file_id: String },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error(transparent)]
    Crypto(#[from] PdError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl BrokerError {
    pub fn is_illegal_state(&self) -> bool {
        matches!(self, BrokerError::Transition(TransitionError::IllegalState(_)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BrokerConfig {
    /// Seeds all broker randomness; `None` draws from the OS.
    pub seed: Option<u64>,
    pub authority: Option<VerifyingKey>,
    pub start_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredFile {
    pub platform: String,
    pub file_id: String,
    pub total: u8,
    pub threshold: u8,
}

#[derive(Debug, Clone, Default)]
struct Execution {
    files: Vec<StoredFile>,
    manifest: ShareManifest,
    envelopes: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiphertextSummary {
    pub platform: String,
    pub file_id: String,
    pub payloads: usize,
    pub file_groups: usize,
    pub attribute_pairs: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionReport {
    pub will_id: String,
    pub platforms_pulled: Vec<String>,
    pub adapter_failures: Vec<String>,
    pub ciphertexts: Vec<CiphertextSummary>,
    pub shares_placed: usize,
    pub placement_warnings: Vec<String>,
    pub keys_distributed: Vec<String>,
    pub skipped_heirs: Vec<String>,
    pub manifest: ShareManifest,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ExecutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalReport {
    /// Decryption outcome per platform.
    pub platforms: BTreeMap<String, DecryptionReport>,
    /// Storage `get` requests issued per file.
    pub requests: BTreeMap<String, usize>,
}

impl RetrievalReport {
    pub fn recovered(&self) -> BTreeMap<&str, &[u8]> {
        self.platforms
            .values()
            .flat_map(|r| r.recovered.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
            .collect()
    }

    pub fn denied(&self) -> Vec<&str> {
        self.platforms
            .values()
            .flat_map(|r| r.denied.iter().map(|d| d.payload_id.as_str()))
            .collect()
    }
}

/// Everything a successor broker needs to take over.
#[derive(Debug, Clone)]
pub struct BrokerExport {
    pub public_params: Vec<u8>,
    pub master_key: Vec<u8>,
    pub manifests: BTreeMap<String, ShareManifest>,
    pub ledger: String,
}

impl BrokerExport {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("public_params.bin"), &self.public_params)?;
        fs::write(dir.join("master_key.bin"), &self.master_key)?;
        fs::write(dir.join("ledger.dwchain"), &self.ledger)?;
        let manifests = serde_json::to_string_pretty(&self.manifests).expect("manifests serialise");
        fs::write(dir.join("manifests.json"), manifests)
    }
}

pub struct Broker {
    now: u64,
    chain: Chain,
    pp: PublicParams,
    mk: MasterKey,
    authority: Option<VerifyingKey>,
    wills: BTreeMap<String, WillRecord>,
    adapters: BTreeMap<String, Box<dyn PlatformAdapter>>,
    providers: Vec<StorageProvider>,
    executions: BTreeMap<String, Execution>,
    rng: ChaCha20Rng,
}

const BROKER: &str = "broker";

/// `will_id-platform_id` with characters outside `[A-Za-z0-9_-]` replaced.
pub fn file_id(will_id: &str, platform_id: &str) -> String {
    format!("{will_id}-{platform_id}")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        let mut rng = match config.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let (pp, mk) = pdcpabe::setup(crate::group::SECURITY_BITS, &mut rng).expect("supported security level");
        Self {
            now: config.start_ms,
            chain: Chain::new(),
            pp,
            mk,
            authority: config.authority,
            wills: BTreeMap::new(),
            adapters: BTreeMap::new(),
            providers: Vec::new(),
            executions: BTreeMap::new(),
            rng,
        }
    }

    pub fn add_adapter(&mut self, adapter: impl PlatformAdapter + 'static) {
        self.adapters.insert(adapter.platform_id().to_string(), Box::new(adapter));
    }

    pub fn add_provider(&mut self, provider: StorageProvider) {
        self.providers.retain(|p| p.location_id() != provider.location_id());
        self.providers.push(provider);
    }

    pub fn provider(&self, location_id: &str) -> Option<&StorageProvider> {
        self.providers.iter().find(|p| p.location_id() == location_id)
    }

    pub fn provider_mut(&mut self, location_id: &str) -> Option<&mut StorageProvider> {
        self.providers.iter_mut().find(|p| p.location_id() == location_id)
    }

    pub fn providers(&self) -> &[StorageProvider] {
        &self.providers
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn ledger(&self) -> &Chain {
        &self.chain
    }

    pub fn public_params(&self) -> &PublicParams {
        &self.pp
    }

    pub fn record(&self, will_id: &str) -> Option<&WillRecord> {
        self.wills.get(will_id)
    }

    pub fn state(&self, will_id: &str) -> Option<WillState> {
        self.wills.get(will_id).map(|r| r.state)
    }

    pub fn manifest(&self, will_id: &str) -> Option<&ShareManifest> {
        self.executions.get(will_id).map(|e| &e.manifest)
    }

    pub fn stored_files(&self, will_id: &str) -> &[StoredFile] {
        self.executions.get(will_id).map_or(&[], |e| e.files.as_slice())
    }

    /// The sealed key waiting for `heir_id`, as envelope bytes.
    pub fn envelope(&self, will_id: &str, heir_id: &str) -> Option<&[u8]> {
        self.executions
            .get(will_id)
            .and_then(|e| e.envelopes.get(heir_id))
            .map(Vec::as_slice)
    }

    fn log(&mut self, actor: &str, action: Action, subject: &str, payload: &[u8]) {
        self.chain
            .append(self.now, actor, action, subject, payload)
            .expect("the broker is the only writer of its chain");
    }

    fn warn(&mut self, actor: &str, subject: &str, message: &str) {
        self.log(actor, Action::Warning, subject, message.as_bytes());
    }

    /// Rule parameters for every will this broker knows.
    pub fn inspection_params(&self) -> BTreeMap<String, WillParams> {
        self.wills
            .iter()
            .map(|(id, r)| {
                (
                    id.clone(),
                    WillParams {
                        vote_threshold: r.will.trigger.vote_threshold,
                        freeze_ms: r.freeze_ms(),
                    },
                )
            })
            .collect()
    }

    pub fn inspect(&self) -> Vec<InspectionFinding> {
        ledger::inspect(&self.chain, &self.inspection_params())
    }

    pub fn deploy(&mut self, will: DigitalWill) -> Result<String, BrokerError> {
        let id = will.will_id.clone();
        let bytes = match serialize_xml(&will) {
            Ok(b) => b,
            Err(e) => {
                self.warn(&will.creator_id, &id, &e.to_string());
                return Err(BrokerError::Validation(e.to_string()));
            }
        };
        if self.wills.get(&id).is_some_and(|r| r.state != WillState::Cancelled) {
            self.warn(&will.creator_id, &id, "duplicate deployment");
            return Err(BrokerError::DuplicateWill(id));
        }
        self.log(&will.creator_id, Action::DeployWill, &id, &bytes);
        for w in will.warnings() {
            self.warn(BROKER, &id, &w);
        }
        self.wills.insert(id.clone(), WillRecord::new(will));
        Ok(id)
    }

    /// Runs a state-machine command and logs its effects as `actor`.
    fn run(&mut self, will_id: &str, actor: &str, cmd: Command) -> Result<WillState, BrokerError> {
        let now = self.now;
        let Some(rec) = self.wills.get_mut(will_id) else {
            self.warn(actor, will_id, "unknown will");
            return Err(BrokerError::UnknownWill(will_id.to_string()));
        };
        match state::apply(rec, &cmd, now) {
            Ok(effects) => {
                let state = rec.state;
                let payload = match &cmd {
                    Command::Update(w) => serialize_xml(w).unwrap_or_default(),
                    _ => Vec::new(),
                };
                for action in effects {
                    let who = match action {
                        Action::FreezeStart | Action::Activate => BROKER,
                        _ => actor,
                    };
                    self.log(who, action, will_id, &payload);
                }
                Ok(state)
            }
            Err(e) => {
                self.warn(actor, will_id, &e.to_string());
                Err(e.into())
            }
        }
    }

    pub fn update_will(&mut self, will_id: &str, new_will: DigitalWill) -> Result<u32, BrokerError> {
        if let Err(e) = new_will.validate() {
            self.warn(&new_will.creator_id, will_id, &e);
            return Err(BrokerError::Validation(e));
        }
        let actor = new_will.creator_id.clone();
        self.run(will_id, &actor, Command::Update(Box::new(new_will)))?;
        Ok(self.wills[will_id].version)
    }

    pub fn delete_will(&mut self, will_id: &str) -> Result<WillState, BrokerError> {
        let actor = self.creator_of(will_id);
        self.run(will_id, &actor, Command::Delete)
    }

    fn creator_of(&self, will_id: &str) -> String {
        self.wills
            .get(will_id)
            .map_or_else(|| "unknown".to_string(), |r| r.will.creator_id.clone())
    }

    pub fn request_trigger(&mut self, will_id: &str, heir_id: &str) -> Result<WillState, BrokerError> {
        self.run(will_id, heir_id, Command::RequestTrigger { heir: heir_id.into() })
    }

    /// A repeated vote is a no-op reported as `DuplicateVote`.
    pub fn vote(&mut self, will_id: &str, heir_id: &str) -> Result<WillState, BrokerError> {
        self.run(will_id, heir_id, Command::Vote { heir: heir_id.into() })
    }

    pub fn veto(&mut self, will_id: &str, creator_credential: &str) -> Result<WillState, BrokerError> {
        self.run(will_id, creator_credential, Command::Veto {
            creator: creator_credential.into(),
        })
    }

    pub fn authority_override(&mut self, will_id: &str, attestation: &[u8]) -> Result<WillState, BrokerError> {
        let Some(authority) = self.authority else {
            self.warn("authority", will_id, "override without a configured authority");
            return Err(BrokerError::NoAuthority);
        };
        if keyvault::verify_override(&authority, will_id, attestation).is_err() {
            self.warn("authority", will_id, "bad attestation");
            return Err(BrokerError::BadAttestation);
        }
        self.run(will_id, "authority", Command::Override)
    }

    /// Advances the simulated clock and activates wills whose freeze has
    /// expired. Returns the wills that changed state.
    pub fn tick(&mut self, now: u64) -> Vec<(String, WillState)> {
        self.now = self.now.max(now);
        let ids: Vec<String> = self.wills.keys().cloned().collect();
        let mut changed = Vec::new();
        for id in ids {
            let before = self.wills[&id].state;
            if let Ok(after) = self.run(&id, BROKER, Command::Tick) {
                if after != before {
                    changed.push((id, after));
                }
            }
        }
        changed
    }

    pub fn advance(&mut self, ms: u64) -> Vec<(String, WillState)> {
        self.tick(self.now.saturating_add(ms))
    }

    pub fn execute(&mut self, will_id: &str) -> Result<ExecutionReport, BrokerError> {
        let Some(rec) = self.wills.get(will_id) else {
            self.warn(BROKER, will_id, "unknown will");
            return Err(BrokerError::UnknownWill(will_id.to_string()));
        };
        if rec.state != WillState::Activated {
            let e = TransitionError::IllegalState(rec.state);
            self.warn(BROKER, will_id, &e.to_string());
            return Err(e.into());
        }
        let will = rec.will.clone();
        let report = self.run_pipeline(&will)?;
        self.run(will_id, BROKER, Command::Execute)?;
        Ok(report)
    }

    fn run_pipeline(&mut self, will: &DigitalWill) -> Result<ExecutionReport, BrokerError> {
        let id = will.will_id.as_str();
        let mut timings = BTreeMap::new();
        let mut report = ExecutionReport {
            will_id: id.to_string(),
            platforms_pulled: Vec::new(),
            adapter_failures: Vec::new(),
            ciphertexts: Vec::new(),
            shares_placed: 0,
            placement_warnings: Vec::new(),
            keys_distributed: Vec::new(),
            skipped_heirs: Vec::new(),
            manifest: ShareManifest::new(),
            timings_ms: BTreeMap::new(),
        };

        let clock = Instant::now();
        let mut pulled = Vec::new();
        for link in &will.platforms {
            let fetched = match self.adapters.get(&link.id) {
                Some(a) => a.fetch(&link.token, &link.assets),
                None => Err(AdapterError::Unavailable(link.id.clone())),
            };
            match fetched {
                Ok(docs) => {
                    let mut payload = Vec::new();
                    for d in &docs {
                        payload.extend_from_slice(&ledger::digest(&d.bytes));
                    }
                    self.log(BROKER, Action::PullData, id, &payload);
                    report.platforms_pulled.push(link.id.clone());
                    pulled.push((link.id.clone(), docs));
                }
                Err(e) => {
                    self.warn(BROKER, id, &format!("adapter failure: {e}"));
                    report.adapter_failures.push(e.to_string());
                }
            }
        }
        timings.insert("pull".to_string(), clock.elapsed().as_secs_f64() * 1e3);

        let clock = Instant::now();
        let mut encrypted = Vec::new();
        for (platform, docs) in pulled {
            let items: Vec<PlainItem> = docs
                .into_iter()
                .map(|d| {
                    let policy = will
                        .policies
                        .iter()
                        .find(|p| p.asset == d.selector)
                        .map(|p| p.policy.clone())
                        .expect("validated wills cover every asset");
                    PlainItem::new(d.selector, d.bytes, policy)
                })
                .collect();
            let ct = pdcpabe::encrypt(&self.pp, &items, &mut self.rng)?;
            let bytes = ct.to_bytes();
            self.log(BROKER, Action::EncryptData, id, &bytes);
            let fid = file_id(id, &platform);
            report.ciphertexts.push(CiphertextSummary {
                platform: platform.clone(),
                file_id: fid.clone(),
                payloads: ct.payloads.len(),
                file_groups: ct.data_nodes.len(),
                attribute_pairs: ct.attribute_pair_count(),
                bytes: bytes.len(),
            });
            encrypted.push((platform, fid, bytes));
        }
        timings.insert("encrypt".to_string(), clock.elapsed().as_secs_f64() * 1e3);

        let clock = Instant::now();
        let mut execution = Execution::default();
        let n = will.storage.locations.len();
        let t = will.storage.threshold as usize;
        for (platform, fid, bytes) in encrypted {
            let shares = sharding::split(&fid, &bytes, n, t, &mut self.rng).map_err(|e| BrokerError::Validation(e.to_string()))?;
            let placed = self.place_shares(id, &fid, shares, &will.storage.locations, &mut execution.manifest, &mut report.placement_warnings);
            if placed < t {
                self.warn(BROKER, id, &format!("aborting: {placed} of {t} shares of {fid} placed"));
                return Err(BrokerError::StorageFailure {
                    file_id: fid,
                    placed,
                    needed: t,
                });
            }
            report.shares_placed += placed;
            let entries: Vec<_> = execution.manifest.for_file(&fid).cloned().collect();
            let manifest_json = serde_json::to_vec(&entries).expect("manifest serialises");
            self.log(BROKER, Action::SplitUpload, id, &manifest_json);
            execution.files.push(StoredFile {
                platform,
                file_id: fid,
                total: n as u8,
                threshold: t as u8,
            });
        }
        timings.insert("split_upload".to_string(), clock.elapsed().as_secs_f64() * 1e3);

        let clock = Instant::now();
        for heir in &will.heirs {
            let sealed = (|| {
                let key = pdcpabe::keygen(&self.mk, &heir.attributes, &mut self.rng).map_err(|e| e.to_string())?;
                let pk = keyvault::parse_public_key(&heir.public_key).map_err(|e| e.to_string())?;
                keyvault::envelope_encrypt(&pk, &key.to_bytes(), &mut self.rng).map_err(|e| e.to_string())
            })();
            match sealed {
                Ok(env) => {
                    let bytes = env.to_bytes();
                    self.log(BROKER, Action::KeyDistribute, id, &bytes);
                    execution.envelopes.insert(heir.id.clone(), bytes);
                    report.keys_distributed.push(heir.id.clone());
                }
                Err(e) => {
                    self.warn(BROKER, id, &format!("no key for heir {}: {e}", heir.id));
                    report.skipped_heirs.push(heir.id.clone());
                }
            }
        }
        timings.insert("key_distribute".to_string(), clock.elapsed().as_secs_f64() * 1e3);

        report.manifest = execution.manifest.clone();
        report.timings_ms = timings;
        self.executions.insert(id.to_string(), execution);
        Ok(report)
    }

    /// Puts share `i` on the will's `i`-th location, moving shares whose
    /// location fails to providers not yet holding a share of this file.
    /// Returns the number placed.
    fn place_shares(
        &mut self,
        will_id: &str,
        fid: &str,
        shares: Vec<Share>,
        locations: &[String],
        manifest: &mut ShareManifest,
        warnings: &mut Vec<String>,
    ) -> usize {
        let mut used: Vec<String> = Vec::new();
        let mut pending = Vec::new();
        for (share, loc) in shares.into_iter().zip(locations) {
            match self.put_share(loc, &share) {
                Ok(()) => {
                    manifest.record(fid, share.share_id, loc).expect("share ids are unique");
                    used.push(loc.clone());
                }
                Err(e) => {
                    let msg = format!("share {} of {fid}: {e}", share.share_id);
                    self.warn(BROKER, will_id, &msg);
                    warnings.push(msg);
                    used.push(loc.clone());
                    pending.push(share);
                }
            }
        }
        let spares: Vec<String> = self
            .providers
            .iter()
            .map(|p| p.location_id().to_string())
            .filter(|l| !used.contains(l))
            .collect();
        let mut spares = spares.into_iter();
        'share: for share in pending {
            for loc in spares.by_ref() {
                match self.put_share(&loc, &share) {
                    Ok(()) => {
                        manifest.record(fid, share.share_id, &loc).expect("share ids are unique");
                        continue 'share;
                    }
                    Err(e) => {
                        let msg = format!("spare {loc} for share {} of {fid}: {e}", share.share_id);
                        self.warn(BROKER, will_id, &msg);
                        warnings.push(msg);
                    }
                }
            }
        }
        manifest.for_file(fid).count()
    }

    fn put_share(&mut self, location: &str, share: &Share) -> Result<(), StorageError> {
        let p = self
            .provider_mut(location)
            .ok_or_else(|| StorageError::Unavailable(location.to_string()))?;
        p.put(&share_file_name(&share.file_id, share.share_id), &share.to_bytes())
    }

    pub fn retrieve(&mut self, will_id: &str, heir_id: &str, heir_sk: &SecretKey) -> Result<RetrievalReport, BrokerError> {
        let Some(rec) = self.wills.get(will_id) else {
            self.warn(heir_id, will_id, "unknown will");
            return Err(BrokerError::UnknownWill(will_id.to_string()));
        };
        if rec.state != WillState::Executed {
            let e = TransitionError::IllegalState(rec.state);
            self.warn(heir_id, will_id, &e.to_string());
            return Err(e.into());
        }
        if rec.will.heir(heir_id).is_none() {
            let e = TransitionError::NotAnHeir(heir_id.to_string());
            self.warn(heir_id, will_id, &e.to_string());
            return Err(e.into());
        }
        let key = match self.open_envelope(will_id, heir_id, heir_sk) {
            Ok(k) => k,
            Err(e) => {
                self.warn(heir_id, will_id, &e.to_string());
                return Err(e);
            }
        };

        let execution = self.executions[will_id].clone();
        let mut report = RetrievalReport {
            platforms: BTreeMap::new(),
            requests: BTreeMap::new(),
        };
        for file in &execution.files {
            let mut entries: Vec<_> = execution.manifest.for_file(&file.file_id).cloned().collect();
            entries.sort_by_key(|e| e.share_id);
            let (outcome, requests) = self.fetch_and_decrypt(will_id, heir_id, file, &entries, &key);
            report.requests.insert(file.file_id.clone(), requests);
            match outcome {
                Ok(dr) => {
                    report.platforms.insert(file.platform.clone(), dr);
                }
                Err(e) => {
                    self.warn(heir_id, will_id, &e.to_string());
                    return Err(e);
                }
            }
        }
        let files: Vec<&str> = execution.files.iter().map(|f| f.file_id.as_str()).collect();
        self.log(heir_id, Action::RetrieveShares, will_id, files.join(",").as_bytes());
        Ok(report)
    }

    fn open_envelope(&self, will_id: &str, heir_id: &str, sk: &SecretKey) -> Result<UserKey, BrokerError> {
        let bytes = self
            .envelope(will_id, heir_id)
            .ok_or_else(|| BrokerError::AuthError(format!("no key was distributed to {heir_id}")))?;
        let env = Envelope::from_bytes(bytes).map_err(|e| BrokerError::AuthError(e.to_string()))?;
        let blob = keyvault::envelope_decrypt(sk, &env).map_err(|e| BrokerError::AuthError(e.to_string()))?;
        UserKey::from_bytes(&blob).map_err(|e| BrokerError::AuthError(e.to_string()))
    }

    /// Requests shares in manifest order, exactly `threshold` first. Further
    /// providers are contacted only when a request fails or the
    /// reconstruction does not authenticate.
    fn fetch_and_decrypt(
        &mut self,
        will_id: &str,
        heir_id: &str,
        file: &StoredFile,
        entries: &[sharding::ManifestEntry],
        key: &UserKey,
    ) -> (Result<DecryptionReport, BrokerError>, usize) {
        let t = file.threshold as usize;
        let mut requests = 0;
        let mut shares: Vec<Share> = Vec::new();
        for entry in entries {
            if shares.len() >= t {
                if let Some(report) = self.try_subsets(&shares, t, key) {
                    return (Ok(report), requests);
                }
                let msg = format!("{} shares of {} did not authenticate; requesting another", shares.len(), file.file_id);
                self.warn(heir_id, will_id, &msg);
            }
            requests += 1;
            let name = share_file_name(&entry.file_id, entry.share_id);
            let fetched = match self.provider_mut(&entry.location_id) {
                Some(p) => p.get(&name),
                None => Err(StorageError::Unavailable(entry.location_id.clone())),
            };
            match fetched.map_err(|e| e.to_string()).and_then(|b| Share::from_bytes(&b).map_err(|e| e.to_string())) {
                Ok(s) if s.file_id == file.file_id && s.share_id == entry.share_id => shares.push(s),
                Ok(_) => self.warn(heir_id, will_id, &format!("{name} at {} holds a different share", entry.location_id)),
                Err(e) => self.warn(heir_id, will_id, &format!("{name} at {}: {e}", entry.location_id)),
            }
        }
        if shares.len() >= t {
            if let Some(report) = self.try_subsets(&shares, t, key) {
                return (Ok(report), requests);
            }
        }
        (
            Err(BrokerError::ThresholdNotMet {
                file_id: file.file_id.clone(),
            }),
            requests,
        )
    }

    /// Tries the newest `t`-subsets first so each new share is used at once.
    fn try_subsets(&self, shares: &[Share], t: usize, key: &UserKey) -> Option<DecryptionReport> {
        let newest = shares.len() - 1;
        let mut found = None;
        for_each_subset(shares.len(), t, &mut |idx| {
            if shares.len() > t && !idx.contains(&newest) {
                return false;
            }
            let subset: Vec<Share> = idx.iter().map(|&i| shares[i].clone()).collect();
            let Ok(bytes) = sharding::combine(&subset) else { return false };
            let Ok(ct) = Ciphertext::from_bytes(&bytes) else { return false };
            let Ok(report) = pdcpabe::decrypt(&self.pp, key, &ct) else { return false };
            if report.denied.iter().any(|d| d.reason == DenialReason::AuthFailure) {
                return false;
            }
            found = Some(report);
            true
        });
        found
    }

    pub fn export(&self) -> BrokerExport {
        BrokerExport {
            public_params: self.pp.to_bytes(),
            master_key: self.mk.to_bytes(),
            manifests: self
                .executions
                .iter()
                .map(|(id, e)| (id.clone(), e.manifest.clone()))
                .collect(),
            ledger: self.chain.to_text(),
        }
    }
}

/// Calls `f` on each `k`-subset of `0..n` in lexicographic order until it
/// returns true.
fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            cur.push(i);
            if go(i + 1, n, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}

#[cfg(test)]
mod tests;
