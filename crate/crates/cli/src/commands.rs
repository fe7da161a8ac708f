//! Single-run commands: data generation, training, evaluation, pruning,
//! meta-GAM, and sweep aggregation.

use std::io::Write as _;
use std::path::Path;

use sievegen::error::{Error, Result};
use sievegen::generator::Generator;
use sievegen::meta_gam::{fit_gam, write_components_csv, BasisSpec};
use sievegen::networks::{read_checkpoint, write_checkpoint, Checkpoint};
use sievegen::numerics::Matrix;
use sievegen::ot_eval::{estimated_w1, sinkhorn_w1, SinkhornConfig, TransportResult};
use sievegen::sieve_mle::{
    prune_train_pipeline, sample_generator, train as train_run, EpochRecord, LatentSampler,
    TrainConfig, TrainedModel,
};
use sievegen::synthetic::{read_data_csv, sample, write_data_csv, Case, SyntheticSpec};

pub fn gen_data(
    case: &str,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    sigma_star: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let spec = SyntheticSpec {
        case: Case::parse(case)?,
        n_train,
        n_val,
        n_test,
        sigma_star,
        seed,
    };
    let set = sample(&spec)?;
    std::fs::create_dir_all(out)?;
    write_data_csv(&out.join("train.csv"), &set.train)?;
    write_data_csv(&out.join("val.csv"), &set.val)?;
    write_data_csv(&out.join("test.csv"), &set.test)?;
    std::fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    println!(
        "wrote {} train / {} val / {} test rows ({} columns) to {}",
        set.train.rows(),
        set.val.rows(),
        set.test.rows(),
        set.train.cols(),
        out.display()
    );
    Ok(())
}

pub fn load_train_config(path: &Path, seed_override: Option<u64>) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: TrainConfig = serde_json::from_str(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "epoch,train_iwae,val_iwae,sigma_hat")?;
    for r in history {
        writeln!(file, "{},{},{},{}", r.epoch, r.train_iwae, r.val_iwae, r.sigma_hat)?;
    }
    Ok(())
}

fn write_train_summary(path: &Path, trained: &TrainedModel) -> Result<()> {
    let summary = serde_json::json!({
        "selected_epoch": trained.selected_epoch,
        "sigma_hat": trained.model.sigma(),
        "sigma_tilde_used": trained.sigma_tilde_used,
        "val_iwae": trained.selected_val_iwae(),
        "nonzero_params": trained.model.generator.nonzero_params(),
        "max_entry_norm": trained.model.generator.max_entry_norm(),
    });
    std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn train(data: &Path, config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_train_config(config, seed)?;
    let train_x = read_data_csv(&data.join("train.csv"))?;
    let val_x = read_data_csv(&data.join("val.csv"))?;
    let trained = train_run(&cfg, &train_x, &val_x)?;

    std::fs::create_dir_all(out)?;
    let ckpt = Checkpoint::from_parts(&trained.model.generator, trained.model.log_sigma, cfg.seed, None);
    write_checkpoint(&out.join("checkpoint.json"), &ckpt)?;
    write_history_csv(&out.join("history.csv"), &trained.history)?;
    write_train_summary(&out.join("train_summary.json"), &trained)?;
    println!(
        "selected epoch {} (val IWAE {:.6}), sigma_hat {:.6}",
        trained.selected_epoch,
        trained.selected_val_iwae().unwrap_or(f64::NAN),
        trained.model.sigma()
    );
    Ok(())
}

pub fn parse_prior(name: &str, dim: usize) -> Result<LatentSampler> {
    match name {
        "standard_normal" => Ok(LatentSampler::StandardNormal { dim }),
        "uniform_unit_cube" => Ok(LatentSampler::UniformUnitCube { dim }),
        other => Err(Error::InvalidConfig(format!("unknown prior '{other}'"))),
    }
}

/// First `m` rows of the test set (errors if fewer are available).
pub fn test_slice(test: &Matrix, m: usize) -> Result<Matrix> {
    if test.rows() < m {
        return Err(Error::InvalidConfig(format!(
            "test set has {} rows, need at least {m}",
            test.rows()
        )));
    }
    let mut out = Matrix::zeros(m, test.cols());
    for i in 0..m {
        out.row_mut(i).copy_from_slice(test.row(i));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn eval_w1(
    checkpoint: &Path,
    data: &Path,
    m: usize,
    prior: &str,
    seed: u64,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint)?;
    let mlp = ckpt.to_mlp()?;
    let sampler = parse_prior(prior, mlp.latent_dim())?;
    let test = read_data_csv(&data.join("test.csv"))?;
    let test_m = test_slice(&test, m)?;

    let mut rng = sievegen::rng::stream(seed, 100);
    let model_samples = sample_generator(&mlp, &sampler, m, &mut rng)?;

    let result: TransportResult = match epsilon {
        Some(eps) => {
            let mut cfg = SinkhornConfig::fixed(eps);
            if let Some(mi) = max_iter {
                cfg.max_iter = mi;
            }
            sinkhorn_w1(&model_samples, &test_m, &cfg)?
        }
        None => match max_iter {
            Some(mi) => {
                let cost = sievegen::ot_eval::CostMatrix::euclidean(&model_samples, &test_m)?;
                let mut cfg = SinkhornConfig::annealed_for(&cost);
                cfg.max_iter = mi;
                sinkhorn_w1(&model_samples, &test_m, &cfg)?
            }
            None => estimated_w1(&model_samples, &test_m, None)?,
        },
    };
    let json = serde_json::to_string_pretty(&result)?;
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, &json)?;
    }
    Ok(())
}

pub fn prune_train(data: &Path, config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_train_config(config, seed)?;
    let train_x = read_data_csv(&data.join("train.csv"))?;
    let val_x = read_data_csv(&data.join("val.csv"))?;
    let outcome = prune_train_pipeline(&cfg, &train_x, &val_x)?;

    std::fs::create_dir_all(out)?;
    let dense_ckpt = Checkpoint::from_parts(
        &outcome.dense.model.generator,
        outcome.dense.model.log_sigma,
        cfg.seed,
        None,
    );
    write_checkpoint(&out.join("checkpoint_dense.json"), &dense_ckpt)?;
    let sparse_ckpt = Checkpoint::from_parts(
        &outcome.sparse.model.generator,
        outcome.sparse.model.log_sigma,
        cfg.seed,
        Some(&outcome.mask),
    );
    write_checkpoint(&out.join("checkpoint.json"), &sparse_ckpt)?;
    write_history_csv(&out.join("history_dense.csv"), &outcome.dense.history)?;
    write_history_csv(&out.join("history_sparse.csv"), &outcome.sparse.history)?;

    let total = outcome.sparse.model.generator.spec.param_count();
    let summary = serde_json::json!({
        "param_count": total,
        "zero_count": outcome.mask.zero_count(),
        "zero_fraction": outcome.mask.zero_fraction,
        "nonzero_params": outcome.sparse.model.generator.nonzero_params(),
        "val_iwae_dense": outcome.dense.selected_val_iwae(),
        "val_iwae_sparse": outcome.sparse.selected_val_iwae(),
        "sigma_hat_dense": outcome.dense.model.sigma(),
        "sigma_hat_sparse": outcome.sparse.model.sigma(),
    });
    std::fs::write(out.join("prune.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "pruned {}/{} parameters to zero; dense val {:.6}, sparse val {:.6}",
        outcome.mask.zero_count(),
        total,
        outcome.dense.selected_val_iwae().unwrap_or(f64::NAN),
        outcome.sparse.selected_val_iwae().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn meta_gam(
    checkpoint: &Path,
    data: &Path,
    knots: usize,
    n_draws: usize,
    m: usize,
    prior: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint)?;
    let mlp = ckpt.to_mlp()?;
    let sampler = parse_prior(prior, mlp.latent_dim())?;
    let basis = BasisSpec {
        knots_per_dim: knots,
        ranges: None,
    };
    let fit = fit_gam(&mlp, &sampler, n_draws, &basis, seed)?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("gam.json"), serde_json::to_string_pretty(&fit)?)?;
    write_components_csv(&out.join("components.csv"), &fit)?;

    let test = read_data_csv(&data.join("test.csv"))?;
    let test_m = test_slice(&test, m)?;
    let mut rng = sievegen::rng::stream(seed, 200);
    let mle_samples = sample_generator(&mlp, &sampler, m, &mut rng)?;
    let mut rng = sievegen::rng::stream(seed, 201);
    let gam_samples = sample_generator(&fit, &sampler, m, &mut rng)?;
    let w1_mle = estimated_w1(&mle_samples, &test_m, None)?;
    let w1_gam = estimated_w1(&gam_samples, &test_m, None)?;

    let mut file = std::fs::File::create(out.join("comparison.csv"))?;
    writeln!(file, "generator,w1,epsilon_final,iterations,residual,m")?;
    for (name, r) in [("sieve_mle", &w1_mle), ("gam", &w1_gam)] {
        writeln!(
            file,
            "{name},{},{},{},{},{}",
            r.w1_estimate, r.epsilon_final, r.iterations, r.marginal_residual, r.m
        )?;
    }
    println!(
        "W1 sieve MLE {:.6}, W1 GAM {:.6}, gap {:.6} (residual RMS of fit {:.6})",
        w1_mle.w1_estimate,
        w1_gam.w1_estimate,
        w1_gam.w1_estimate - w1_mle.w1_estimate,
        fit.residual_rms
    );
    Ok(())
}

pub fn report(sweep: &Path, out: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(sweep).map_err(csv_err)?;
    let mut rows: Vec<crate::sweep::SweepRecord> = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(csv_err)?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("sweep csv"));
    }

    let mut keys: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.sigma_tilde)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    let mut file = std::fs::File::create(out)?;
    writeln!(
        file,
        "n,sigma_tilde,runs,w1_median,w1_mean,sigma_error_median,sigma_error_mean,sigma_hat_mean"
    )?;
    for (n, st) in keys {
        let group: Vec<&crate::sweep::SweepRecord> = rows
            .iter()
            .filter(|r| r.n == n && r.sigma_tilde == st)
            .collect();
        let w1: Vec<f64> = group.iter().map(|r| r.w1_estimate).collect();
        let serr: Vec<f64> = group
            .iter()
            .map(|r| r.sigma_error)
            .filter(|v| v.is_finite())
            .collect();
        let shat: Vec<f64> = group.iter().map(|r| r.sigma_hat).collect();
        writeln!(
            file,
            "{n},{st},{},{},{},{},{},{}",
            group.len(),
            median(&w1),
            mean(&w1),
            median(&serr),
            mean(&serr),
            mean(&shat)
        )?;
    }
    println!("wrote report to {}", out.display());
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}
