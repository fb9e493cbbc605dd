//! Benchmark harness comparing pdcpabe against the bsw07 baseline.
//!
//! Workloads are reproducible from the seed: for `atoms` messages,
//! `ceil(atoms / sharing_factor)` random policies are drawn and the messages
//! are spread over them uniformly at random. Policies are binary trees of
//! depth 2 to 4 over a universe of attributes `a00`, `a01`, ...; the
//! decryption key holds a random subset of `key_attributes` of them.
//!
//! pdcpabe encrypts all messages into one ciphertext; bsw07 produces one
//! ciphertext per message. Setup and keygen are timed once per repetition
//! and reported with `atoms = 0`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use web_time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::bsw07;
use crate::group::SECURITY_BITS;
use crate::pdcpabe::{self, PlainItem};
use crate::policy::{AttributeName, Gate, PolicyExpr};

pub const CSV_HEADER: &str = "scheme,op,atoms,avg_s,stddev_s,median_s";

pub const MESSAGE_LEN: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("at least one atom count is required")]
    NoAtomCounts,
    #[error("atom counts must be positive")]
    ZeroAtoms,
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("sharing factor must be at least 1")]
    ZeroSharing,
    #[error("attribute universe of {universe} cannot supply {wanted} key attributes")]
    UniverseTooSmall { universe: usize, wanted: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub atom_counts: Vec<usize>,
    pub sharing_factor: usize,
    pub attribute_universe_size: usize,
    pub key_attributes: usize,
    pub keygen_sizes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            atom_counts: vec![50, 100, 200, 400],
            sharing_factor: 50,
            attribute_universe_size: 64,
            key_attributes: 30,
            keygen_sizes: vec![5, 10, 20, 30],
            repetitions: 10,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.atom_counts.is_empty() {
            return Err(ConfigError::NoAtomCounts);
        }
        if self.atom_counts.contains(&0) {
            return Err(ConfigError::ZeroAtoms);
        }
        if self.repetitions == 0 {
            return Err(ConfigError::ZeroRepetitions);
        }
        if self.sharing_factor == 0 {
            return Err(ConfigError::ZeroSharing);
        }
        let wanted = self.keygen_sizes.iter().copied().chain([self.key_attributes]).max().unwrap_or(0);
        if wanted > self.attribute_universe_size {
            return Err(ConfigError::UniverseTooSmall {
                universe: self.attribute_universe_size,
                wanted,
            });
        }
        Ok(())
    }
}

pub fn universe(size: usize) -> Vec<AttributeName> {
    (0..size)
        .map(|i| AttributeName::new(format!("a{i:02}")).expect("generated names are valid"))
        .collect()
}

/// A binary tree of exactly `depth` levels of gates with random shape,
/// gates and leaves.
pub fn random_policy<R: Rng>(universe: &[AttributeName], depth: usize, rng: &mut R) -> PolicyExpr {
    if depth == 0 {
        return PolicyExpr::Attr(universe.choose(rng).expect("non-empty universe").clone());
    }
    let deep = random_policy(universe, depth - 1, rng);
    let other_depth = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..depth) };
    let other = random_policy(universe, other_depth, rng);
    let gate = if rng.gen_bool(0.5) { Gate::And } else { Gate::Or };
    if rng.gen_bool(0.5) {
        PolicyExpr::gate(gate, deep, other)
    } else {
        PolicyExpr::gate(gate, other, deep)
    }
}

pub fn random_key_attributes<R: Rng>(universe: &[AttributeName], n: usize, rng: &mut R) -> BTreeSet<AttributeName> {
    universe.choose_multiple(rng, n).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub atoms: usize,
    pub policies: Vec<PolicyExpr>,
    /// Policy index per message.
    pub assignment: Vec<usize>,
    pub messages: Vec<Vec<u8>>,
    pub key_attributes: BTreeSet<AttributeName>,
}

impl Workload {
    pub fn generate(config: &BenchConfig, atoms: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ (atoms as u64).rotate_left(32));
        let universe = universe(config.attribute_universe_size);
        let k = atoms.div_ceil(config.sharing_factor);
        let policies: Vec<PolicyExpr> = (0..k)
            .map(|_| {
                let depth = rng.gen_range(2..=4);
                random_policy(&universe, depth, &mut rng)
            })
            .collect();
        let mut assignment: Vec<usize> = (0..atoms).map(|i| i % k).collect();
        assignment.shuffle(&mut rng);
        let messages = (0..atoms)
            .map(|_| {
                let mut m = vec![0u8; MESSAGE_LEN];
                rng.fill_bytes(&mut m);
                m
            })
            .collect();
        let key_attributes = random_key_attributes(&universe, config.key_attributes, &mut rng);
        Self {
            atoms,
            policies,
            assignment,
            messages,
            key_attributes,
        }
    }

    pub fn items(&self) -> Vec<PlainItem> {
        self.messages
            .iter()
            .zip(&self.assignment)
            .enumerate()
            .map(|(i, (m, &p))| PlainItem::new(format!("m{i}"), m.clone(), self.policies[p].clone()))
            .collect()
    }

    pub fn distinct_policies(&self) -> usize {
        self.policies.iter().map(PolicyExpr::canonical_key).collect::<BTreeSet<_>>().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: &'static str,
    pub op: String,
    pub atoms: usize,
    pub samples: Vec<f64>,
}

impl BenchRow {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation; zero for a single sample.
    pub fn stddev(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn median(&self) -> f64 {
        let mut s = self.samples.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    }
}

/// Size of the encrypted structure for one workload, independent of timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureRow {
    pub scheme: &'static str,
    pub atoms: usize,
    pub distinct_policies: usize,
    pub attribute_pairs: usize,
    pub ciphertext_bytes: usize,
    pub recovered: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub structure: Vec<StructureRow>,
}

impl BenchReport {
    pub fn row(&self, scheme: &str, op: &str, atoms: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.op == op && r.atoms == atoms)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.scheme,
                r.op,
                r.atoms,
                r.mean(),
                r.stddev(),
                r.median()
            );
        }
        out
    }

    pub fn structure_csv(&self) -> String {
        let mut out = String::from("scheme,atoms,distinct_policies,attribute_pairs,ciphertext_bytes,recovered\n");
        for s in &self.structure {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.scheme, s.atoms, s.distinct_policies, s.attribute_pairs, s.ciphertext_bytes, s.recovered
            );
        }
        out
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Runs the benchmark. `progress` is called with a short label before each
/// measured series.
pub fn run(config: &BenchConfig, mut progress: impl FnMut(&str)) -> Result<BenchReport, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let universe = universe(config.attribute_universe_size);
    let mut report = BenchReport::default();
    let reps = config.repetitions;

    progress("setup/keygen");
    let mut pd_setup = Vec::new();
    let mut bsw_setup = Vec::new();
    let mut pd_keygen = vec![Vec::new(); config.keygen_sizes.len()];
    let mut bsw_keygen = vec![Vec::new(); config.keygen_sizes.len()];
    for _ in 0..reps {
        let ((_, mk), t) = timed(|| pdcpabe::setup(SECURITY_BITS, &mut rng).expect("supported level"));
        pd_setup.push(t);
        let ((_, bmk), t) = timed(|| bsw07::setup(&mut rng));
        bsw_setup.push(t);
        for (i, &n) in config.keygen_sizes.iter().enumerate() {
            let attrs = random_key_attributes(&universe, n, &mut rng);
            let (_, t) = timed(|| pdcpabe::keygen(&mk, &attrs, &mut rng));
            pd_keygen[i].push(t);
            let (_, t) = timed(|| bsw07::keygen(&bmk, &attrs, &mut rng));
            bsw_keygen[i].push(t);
        }
    }
    let row = |scheme, op: &str, atoms, samples| BenchRow {
        scheme,
        op: op.to_string(),
        atoms,
        samples,
    };
    report.rows.push(row("pdcpabe", "setup", 0, pd_setup));
    report.rows.push(row("bsw07", "setup", 0, bsw_setup));
    for (i, &n) in config.keygen_sizes.iter().enumerate() {
        report.rows.push(row("pdcpabe", &format!("keygen:{n}"), 0, pd_keygen[i].clone()));
        report.rows.push(row("bsw07", &format!("keygen:{n}"), 0, bsw_keygen[i].clone()));
    }

    let (pp, mk) = pdcpabe::setup(SECURITY_BITS, &mut rng).expect("supported level");
    let (bpp, bmk) = bsw07::setup(&mut rng);
    for &atoms in &config.atom_counts {
        let w = Workload::generate(config, atoms);
        let items = w.items();
        let pd_key = pdcpabe::keygen(&mk, &w.key_attributes, &mut rng).expect("non-empty key");
        let bsw_key = bsw07::keygen(&bmk, &w.key_attributes, &mut rng).expect("non-empty key");
        let policies: Vec<&PolicyExpr> = w.assignment.iter().map(|&p| &w.policies[p]).collect();

        progress(&format!("pdcpabe {atoms} atoms"));
        let (mut enc, mut dec) = (Vec::new(), Vec::new());
        let mut structure = None;
        for _ in 0..reps {
            let (ct, t) = timed(|| pdcpabe::encrypt(&pp, &items, &mut rng).expect("valid workload"));
            enc.push(t);
            let (res, t) = timed(|| pdcpabe::decrypt(&pp, &pd_key, &ct).expect("well-formed ciphertext"));
            dec.push(t);
            structure.get_or_insert(StructureRow {
                scheme: "pdcpabe",
                atoms,
                distinct_policies: w.distinct_policies(),
                attribute_pairs: ct.attribute_pair_count(),
                ciphertext_bytes: ct.to_bytes().len(),
                recovered: res.recovered.len(),
            });
        }
        report.rows.push(row("pdcpabe", "encrypt", atoms, enc));
        report.rows.push(row("pdcpabe", "decrypt", atoms, dec));
        report.structure.extend(structure);

        progress(&format!("bsw07 {atoms} atoms"));
        let (mut enc, mut dec) = (Vec::new(), Vec::new());
        let mut structure = None;
        for _ in 0..reps {
            let (cts, t) = timed(|| {
                w.messages
                    .iter()
                    .zip(&policies)
                    .map(|(m, p)| bsw07::encrypt(&bpp, m, p, &mut rng))
                    .collect::<Vec<_>>()
            });
            enc.push(t);
            let (recovered, t) = timed(|| cts.iter().filter(|c| bsw07::decrypt(&bpp, &bsw_key, c).is_ok()).count());
            dec.push(t);
            structure.get_or_insert(StructureRow {
                scheme: "bsw07",
                atoms,
                distinct_policies: w.distinct_policies(),
                attribute_pairs: cts.iter().map(|c| c.leaf_pair_count()).sum(),
                ciphertext_bytes: cts.iter().map(|c| c.to_bytes().len()).sum(),
                recovered,
            });
        }
        report.rows.push(row("bsw07", "encrypt", atoms, enc));
        report.rows.push(row("bsw07", "decrypt", atoms, dec));
        report.structure.extend(structure);
    }
    Ok(report)
}
