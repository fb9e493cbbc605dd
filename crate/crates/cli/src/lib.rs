//! Command-line surface for heirloom.
//!
//! Exit codes: 0 success, 1 a check failed (bad chain, invalid will,
//! failed scenario step, findings), 2 usage or input error.

pub mod scenario;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use heirloom_core::bench::{self, BenchConfig};
use heirloom_core::group::SECURITY_BITS;
use heirloom_core::keyvault::{self, KdfConfig};
use heirloom_core::ledger::{self, Chain, WillParams};
use heirloom_core::pdcpabe::{self, Ciphertext, MasterKey, PlainItem, PublicParams, UserKey};
use heirloom_core::policy::{attribute_set, parse_policy};
use heirloom_core::sharding::{self, Share};
use heirloom_core::willfile::parse_xml;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "heirloom", version, about = "Digital will escrow with partially decryptable attribute-based encryption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time pdcpabe against bsw07 and write a CSV report.
    Bench(BenchArgs),
    /// Run a broker scenario file and write its ledger and report.
    Lifecycle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate pdcpabe public parameters and master key.
    Setup {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Issue a pdcpabe key for a comma-separated attribute list.
    Keygen {
        #[arg(long)]
        master_key: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt every file in a directory into one ciphertext.
    Encrypt {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        input_dir: PathBuf,
        /// TOML table mapping file names to policies.
        #[arg(long)]
        policies: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt whatever a key can open; denied files are listed.
    Decrypt {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        ciphertext: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Split a file into Shamir shares.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        shares: usize,
        /// Defaults to max(2, ceil(shares / 2)).
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        file_id: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reconstruct a file from share files.
    Combine {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        shares: Vec<PathBuf>,
    },
    /// Parse and validate a will file.
    WillValidate { will: PathBuf },
    /// Check the hash links of a ledger file.
    ChainVerify { ledger: PathBuf },
    /// Replay a ledger against the workflow rules.
    Inspect {
        ledger: PathBuf,
        /// Will files supplying vote thresholds and freeze periods.
        #[arg(long = "will")]
        wills: Vec<PathBuf>,
    },
    /// Derive an heir's public key from a password.
    DeriveKey {
        /// Name of the environment variable holding the password.
        #[arg(long, default_value = "HEIRLOOM_PASSWORD")]
        password_env: String,
        /// TOML file with memory_kib, iterations, parallelism and hex salt.
        #[arg(long, conflicts_with = "salt")]
        kdf_config: Option<PathBuf>,
        /// Salt text, used with the recommended parameters.
        #[arg(long)]
        salt: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    pub atoms: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub sharing: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub universe: usize,
    #[arg(long, default_value_t = 30)]
    pub key_attrs: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write ciphertext structure counts as CSV.
    #[arg(long)]
    pub structure_out: Option<PathBuf>,
}

impl BenchArgs {
    pub fn config(&self) -> BenchConfig {
        BenchConfig {
            atom_counts: self.atoms.clone(),
            sharing_factor: self.sharing,
            attribute_universe_size: self.universe,
            key_attributes: self.key_attrs,
            repetitions: self.reps,
            seed: self.seed,
            ..BenchConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut say = |s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Bench(args) => {
            let config = args.config();
            let report = bench::run(&config, |label| eprintln!("bench: {label}")).map_err(usage)?;
            match &args.out {
                Some(p) => {
                    write(p, report.to_csv())?;
                    say(format!("wrote {} rows to {}", report.rows.len(), p.display()));
                }
                None => say(report.to_csv().trim_end().to_string()),
            }
            if let Some(p) = &args.structure_out {
                write(p, report.structure_csv())?;
            }
        }
        Command::Lifecycle { scenario, out_dir } => {
            let (sc, base) = scenario::load(&scenario).map_err(usage)?;
            let outcome = scenario::run(&sc, &base).map_err(|e| CliError::Failed(e.to_string()))?;
            outcome.write_to(&out_dir).map_err(usage)?;
            for r in &outcome.log {
                say(format!("{:>3} {:<16} {}", r.step, r.op, r.outcome));
            }
            let findings = outcome.broker.inspect();
            say(format!(
                "final state {}, {} ledger entries, {} findings",
                outcome.final_state().map_or("none".into(), |s| s.to_string()),
                outcome.broker.ledger().len(),
                findings.len()
            ));
        }
        Command::Setup { out_dir, seed } => {
            let (pp, mk) = pdcpabe::setup(SECURITY_BITS, &mut rng(seed)).map_err(usage)?;
            write(&out_dir.join("public_params.bin"), pp.to_bytes())?;
            write(&out_dir.join("master_key.bin"), mk.to_bytes())?;
            say(format!("wrote public_params.bin and master_key.bin to {}", out_dir.display()));
        }
        Command::Keygen { master_key, attrs, out } => {
            let mk = MasterKey::from_bytes(&read(&master_key)?).map_err(usage)?;
            let attrs = attribute_set(attrs.iter().map(|a| a.trim())).map_err(usage)?;
            let key = pdcpabe::keygen(&mk, &attrs, &mut rng(None)).map_err(usage)?;
            write(&out, key.to_bytes())?;
            say(format!("key for {} attributes written to {}", attrs.len(), out.display()));
        }
        Command::Encrypt { params, input_dir, policies, out } => {
            let pp = PublicParams::from_bytes(&read(&params)?).map_err(usage)?;
            let map: BTreeMap<String, String> = toml::from_str(&read_text(&policies)?).map_err(usage)?;
            let mut items = Vec::new();
            for (name, policy) in &map {
                let policy = parse_policy(policy).map_err(|e| usage(format!("{name}: {e}")))?;
                items.push(PlainItem::new(name.clone(), read(&input_dir.join(name))?, policy));
            }
            let ct = pdcpabe::encrypt(&pp, &items, &mut rng(None)).map_err(usage)?;
            write(&out, ct.to_bytes())?;
            say(format!(
                "{} files, {} file groups, {} attribute pairs",
                ct.payloads.len(),
                ct.data_nodes.len(),
                ct.attribute_pair_count()
            ));
        }
        Command::Decrypt { params, key, ciphertext, out_dir } => {
            let pp = PublicParams::from_bytes(&read(&params)?).map_err(usage)?;
            let key = UserKey::from_bytes(&read(&key)?).map_err(usage)?;
            let ct = Ciphertext::from_bytes(&read(&ciphertext)?).map_err(usage)?;
            let report = pdcpabe::decrypt(&pp, &key, &ct).map_err(usage)?;
            for (name, data) in &report.recovered {
                let name = Path::new(name).file_name().ok_or_else(|| usage(format!("bad payload name {name}")))?;
                write(&out_dir.join(name), data)?;
                say(format!("recovered {}", name.to_string_lossy()));
            }
            for d in &report.denied {
                say(format!("denied {} ({})", d.payload_id, d.reason));
            }
        }
        Command::Split {
            input,
            shares,
            threshold,
            file_id,
            out_dir,
        } => {
            let data = read(&input)?;
            let t = match threshold {
                Some(t) => t,
                None => sharding::default_threshold(shares).map_err(usage)?,
            };
            let id = file_id.unwrap_or_else(|| {
                input
                    .file_name()
                    .map_or("file".into(), |n| n.to_string_lossy().replace('.', "_"))
            });
            let parts = sharding::split(&id, &data, shares, t, &mut rng(None)).map_err(usage)?;
            for s in &parts {
                write(&out_dir.join(format!("{id}.{}.share", s.share_id)), s.to_bytes())?;
            }
            say(format!("{} shares of {id}, any {t} reconstruct", parts.len()));
        }
        Command::Combine { out, shares } => {
            let parts = shares
                .iter()
                .map(|p| Share::from_bytes(&read(p)?).map_err(usage))
                .collect::<Result<Vec<_>, _>>()?;
            let data = sharding::combine(&parts).map_err(|e| CliError::Failed(e.to_string()))?;
            write(&out, &data)?;
            say(format!("{} bytes written to {}", data.len(), out.display()));
        }
        Command::WillValidate { will } => {
            let w = parse_xml(&read(&will)?).map_err(|e| CliError::Failed(e.to_string()))?;
            for warning in w.warnings() {
                say(format!("warning: {warning}"));
            }
            say(format!(
                "{}: valid ({} heirs, {} platforms, {} policies)",
                w.will_id,
                w.heirs.len(),
                w.platforms.len(),
                w.policies.len()
            ));
        }
        Command::ChainVerify { ledger } => {
            let chain = Chain::from_text(&read_text(&ledger)?).map_err(|e| CliError::Failed(e.to_string()))?;
            chain
                .verify()
                .map_err(|seq| CliError::Failed(format!("chain broken at entry {seq}")))?;
            say(format!("{} entries verified", chain.len()));
        }
        Command::Inspect { ledger, wills } => {
            let chain = Chain::from_text(&read_text(&ledger)?).map_err(|e| CliError::Failed(e.to_string()))?;
            let mut params = BTreeMap::new();
            for p in &wills {
                let w = parse_xml(&read(p)?).map_err(usage)?;
                params.insert(
                    w.will_id.clone(),
                    WillParams {
                        vote_threshold: w.trigger.vote_threshold,
                        freeze_ms: w.trigger.freeze_seconds.saturating_mul(1000),
                    },
                );
            }
            let findings = ledger::inspect(&chain, &params);
            for f in &findings {
                say(format!("#{} {:?} {:?}: {}", f.seq, f.rule, f.severity, f.description));
            }
            if !findings.is_empty() {
                return Err(CliError::Failed(format!("{} findings", findings.len())));
            }
            say(format!("{} entries, no findings", chain.len()));
        }
        Command::DeriveKey {
            password_env,
            kdf_config,
            salt,
        } => {
            let password = std::env::var(&password_env).map_err(|_| usage(format!("set {password_env} to the password")))?;
            let kp = match (kdf_config, salt) {
                (Some(path), _) => {
                    let cfg: KdfConfig = toml::from_str(&read_text(&path)?).map_err(usage)?;
                    keyvault::derive_keypair_with(&cfg, &password)
                }
                (None, Some(salt)) => keyvault::derive_keypair(&password, salt.as_bytes()),
                (None, None) => return Err(usage("one of --kdf-config or --salt is required")),
            }
            .map_err(usage)?;
            say(keyvault::public_key_hex(&kp.pk));
        }
    }
    Ok(())
}

/// Exit code for a parsed command line.
pub fn main_with(cli: Cli) -> i32 {
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
