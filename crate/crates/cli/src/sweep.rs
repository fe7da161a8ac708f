//! Resumable experiment sweeps over (seed, n, sigma_tilde) grids.
//!
//! Each grid point trains one model and evaluates its estimated W1 against
//! held-out test data. Rows append to a key-unique CSV carrying the full
//! reproduction key (seed and a config hash); re-running skips completed
//! keys, and failed runs land in failures.log without stopping the sweep.

use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sievegen::error::{Error, Result};
use sievegen::ot_eval::estimated_w1;
use sievegen::sieve_mle::{
    recommended_variance, sample_generator, sigma_recovery_error, train, PerturbationSchedule,
    TrainConfig,
};
use sievegen::synthetic::{sample, Case, SyntheticSpec};

use crate::commands::{csv_err, test_slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Fixed n, sigma grid (the perturbation U-curve).
    Sigma,
    /// n grid crossed with the sigma grid (recovery over sample size).
    SampleSize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Fixed training size for sweep-sigma.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Training sizes for sweep-n.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_holdout")]
    pub n_val: usize,
    #[serde(default = "default_holdout")]
    pub n_test: usize,
    #[serde(default)]
    pub sigma_star: f64,
    /// Base seed for dataset generation (datasets depend on n, not on the
    /// run seed, so seeds vary only the initialization and noise streams).
    #[serde(default)]
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    /// Perturbation scales; mutually exclusive with `schedule`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma_grid: Vec<f64>,
    /// Rate-rule alternative to an explicit grid: one sigma per n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PerturbationSchedule>,
    #[serde(default = "default_eval_m")]
    pub eval_m: usize,
    /// Template training config; the sweep overrides seed and sigma_tilde.
    pub train: TrainConfig,
    /// Per-run wall-clock guard (seconds).
    #[serde(default = "default_budget")]
    pub time_budget_secs: f64,
}

fn default_holdout() -> usize {
    1000
}
fn default_eval_m() -> usize {
    1000
}
fn default_budget() -> f64 {
    600.0
}

impl ExperimentConfig {
    fn validate(&self, kind: SweepKind) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds list must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        match kind {
            SweepKind::Sigma => {
                if self.n_train.is_none() {
                    return Err(Error::InvalidConfig("sweep-sigma needs n_train".into()));
                }
            }
            SweepKind::SampleSize => {
                if self.n_grid.is_empty() {
                    return Err(Error::InvalidConfig("sweep-n needs a non-empty n_grid".into()));
                }
            }
        }
        if self.sigma_grid.is_empty() && self.schedule.is_none() {
            return Err(Error::InvalidConfig(
                "need sigma_grid or schedule for the perturbation scale".into(),
            ));
        }
        if !self.sigma_grid.is_empty() && self.schedule.is_some() {
            return Err(Error::InvalidConfig(
                "sigma_grid and schedule are mutually exclusive".into(),
            ));
        }
        if self.eval_m > self.n_test {
            return Err(Error::InvalidConfig(format!(
                "eval_m {} exceeds n_test {}",
                self.eval_m, self.n_test
            )));
        }
        if self.sigma_star < 0.0 {
            return Err(Error::InvalidConfig("sigma_star must be >= 0".into()));
        }
        let mut t = self.train.clone();
        t.sigma_tilde = Some(0.0);
        t.schedule = None;
        t.validate()?;
        Ok(())
    }

    /// Hash of everything that determines a run's numeric output besides the
    /// per-row key (seed, n, sigma_tilde).
    fn config_hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.seeds = Vec::new();
        normalized.sigma_grid = Vec::new();
        normalized.n_grid = Vec::new();
        normalized.n_train = None;
        normalized.train.seed = 0;
        normalized.train.sigma_tilde = None;
        normalized.train.schedule = None;
        let text = serde_json::to_string(&normalized).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One row per completed (seed, n, sigma_tilde) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub n: usize,
    pub sigma_tilde: f64,
    pub sigma_hat: f64,
    /// Relative error against sqrt(sigma_star^2 + sigma_tilde^2); NaN when
    /// that target is zero.
    pub sigma_error: f64,
    pub w1_estimate: f64,
    pub selected_epoch: usize,
    pub wall_seconds: f64,
    pub config_hash: String,
}

fn dataset_seed(base: u64, n: usize) -> u64 {
    base ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains and evaluates one grid point.
pub fn run_one(cfg: &ExperimentConfig, seed: u64, n: usize, sigma_tilde: f64, hash: &str) -> Result<SweepRecord> {
    let spec = SyntheticSpec {
        case: cfg.case,
        n_train: n,
        n_val: cfg.n_val,
        n_test: cfg.n_test,
        sigma_star: cfg.sigma_star,
        seed: dataset_seed(cfg.data_seed, n),
    };
    let data = sample(&spec)?;

    let mut tc = cfg.train.clone();
    tc.seed = seed;
    tc.sigma_tilde = Some(sigma_tilde);
    tc.schedule = None;
    tc.time_budget_secs = Some(cfg.time_budget_secs);

    let started = Instant::now();
    let trained = train(&tc, &data.train, &data.val)?;

    let sampler = tc.sampler();
    let mut rng = sievegen::rng::stream(seed, 100);
    let model_samples = sample_generator(&trained.model, &sampler, cfg.eval_m, &mut rng)?;
    let test_m = test_slice(&data.test, cfg.eval_m)?;
    let w1 = estimated_w1(&model_samples, &test_m, None)?;

    let sigma_hat = trained.model.sigma();
    let sigma_error =
        sigma_recovery_error(sigma_hat, cfg.sigma_star, sigma_tilde).unwrap_or(f64::NAN);

    Ok(SweepRecord {
        seed,
        n,
        sigma_tilde,
        sigma_hat,
        sigma_error,
        w1_estimate: w1.w1_estimate,
        selected_epoch: trained.selected_epoch,
        wall_seconds: started.elapsed().as_secs_f64(),
        config_hash: hash.to_string(),
    })
}

pub fn run_sweep(config_path: &Path, out_dir: &Path, kind: SweepKind) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    cfg.validate(kind)?;
    let hash = cfg.config_hash();

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(match kind {
        SweepKind::Sigma => "sweep_sigma.csv",
        SweepKind::SampleSize => "sweep_n.csv",
    });

    // Completed keys from an earlier (possibly interrupted) invocation.
    let mut done: Vec<(u64, usize, f64)> = Vec::new();
    if csv_path.exists() {
        let mut reader = csv::Reader::from_path(&csv_path).map_err(csv_err)?;
        for rec in reader.deserialize::<SweepRecord>() {
            let rec = rec.map_err(csv_err)?;
            if rec.config_hash != hash {
                return Err(Error::InvalidConfig(format!(
                    "existing {} was produced with config hash {}, current is {hash}; \
                     use a fresh output directory",
                    csv_path.display(),
                    rec.config_hash
                )));
            }
            done.push((rec.seed, rec.n, rec.sigma_tilde));
        }
    }

    let n_values: Vec<usize> = match kind {
        SweepKind::Sigma => vec![cfg.n_train.unwrap()],
        SweepKind::SampleSize => cfg.n_grid.clone(),
    };
    let mut runs: Vec<(u64, usize, f64)> = Vec::new();
    for &seed in &cfg.seeds {
        for &n in &n_values {
            let sigmas: Vec<f64> = if let Some(s) = &cfg.schedule {
                vec![recommended_variance(s, n)?.sqrt()]
            } else {
                cfg.sigma_grid.clone()
            };
            for st in sigmas {
                if !done.iter().any(|k| k.0 == seed && k.1 == n && k.2 == st) {
                    runs.push((seed, n, st));
                }
            }
        }
    }
    let total = runs.len() + done.len();
    eprintln!(
        "sweep: {} runs total, {} already done, {} to go",
        total,
        done.len(),
        runs.len()
    );

    let file = std::fs::OpenOptions::new().create(true).append(true).open(&csv_path)?;
    let needs_header = done.is_empty() && file.metadata()?.len() == 0;
    let writer = Mutex::new(csv::WriterBuilder::new().has_headers(needs_header).from_writer(file));
    let failures = Mutex::new(Vec::<String>::new());

    runs.par_iter().for_each(|&(seed, n, st)| {
        match run_one(&cfg, seed, n, st, &hash) {
            Ok(record) => {
                let mut w = writer.lock().unwrap();
                if let Err(e) = w.serialize(&record).and_then(|_| w.flush().map_err(Into::into)) {
                    failures.lock().unwrap().push(format!(
                        "seed={seed} n={n} sigma_tilde={st}: write failed: {e}"
                    ));
                } else {
                    eprintln!(
                        "done seed={seed} n={n} sigma_tilde={st}: w1={:.6} sigma_hat={:.6} ({:.1}s)",
                        record.w1_estimate, record.sigma_hat, record.wall_seconds
                    );
                }
            }
            Err(e) => {
                eprintln!("failed seed={seed} n={n} sigma_tilde={st}: {e}");
                failures.lock().unwrap().push(format!("seed={seed} n={n} sigma_tilde={st}: {e}"));
            }
        }
    });

    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        let mut log = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("failures.log"))?;
        for line in &failures {
            writeln!(log, "{line}")?;
        }
        eprintln!("{} run(s) failed; keys recorded in failures.log and retried on rerun", failures.len());
    }
    println!("sweep csv: {}", csv_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ExperimentConfig {
        let mut train = TrainConfig::new(2, vec![8], 0);
        train.max_epochs = 1;
        train.k = 2;
        train.batch = 20;
        ExperimentConfig {
            case: Case::Case1,
            n_train: Some(40),
            n_grid: vec![],
            n_val: 20,
            n_test: 30,
            sigma_star: 0.0,
            data_seed: 0,
            seeds: vec![1, 2],
            sigma_grid: vec![0.1],
            schedule: None,
            eval_m: 16,
            train,
            time_budget_secs: 600.0,
        }
    }

    #[test]
    fn config_hash_ignores_grids_but_not_substance() {
        let a = base_config();
        let mut b = base_config();
        b.seeds = vec![5, 6, 7];
        b.sigma_grid = vec![0.0, 0.2];
        assert_eq!(a.config_hash(), b.config_hash());

        let mut c = base_config();
        c.sigma_star = 0.3;
        assert_ne!(a.config_hash(), c.config_hash());
        let mut d = base_config();
        d.train.lr = 0.9;
        assert_ne!(a.config_hash(), d.config_hash());
    }

    #[test]
    fn validate_catches_mutually_exclusive_sigma_sources() {
        let mut cfg = base_config();
        cfg.schedule = Some(PerturbationSchedule {
            beta_star: 1.0,
            t_star: 1.0,
        });
        assert!(cfg.validate(SweepKind::Sigma).is_err());
    }

    #[test]
    fn validate_requires_grid_for_kind() {
        let mut cfg = base_config();
        cfg.n_train = None;
        assert!(cfg.validate(SweepKind::Sigma).is_err());
        assert!(cfg.validate(SweepKind::SampleSize).is_err());
        cfg.n_grid = vec![50];
        cfg.validate(SweepKind::SampleSize).unwrap();
    }

    #[test]
    fn dataset_seed_varies_with_n_only() {
        assert_eq!(dataset_seed(7, 100), dataset_seed(7, 100));
        assert_ne!(dataset_seed(7, 100), dataset_seed(7, 200));
    }
}
