//! Mini-batched IWAE training with Adam, validation-based epoch selection,
//! and the two-round magnitude-pruning pipeline.
//!
//! One run is sequential over epochs and bit-reproducible for a fixed seed:
//! every random stream (initialization, perturbation, validation draws,
//! batch shuffling and reparameterization noise) derives from
//! `(config.seed, fixed stream index)`.

use std::time::Instant;

use rand::seq::SliceRandom as _;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    Encoder, GeneratorModel, PerturbationSpec, PriorKind, TrainConfig, LOGVAR_CLAMP,
};
use crate::error::{Error, Result};
use crate::networks::{apply_mask, prune_round, MlpTapeParams, PruneMask, MLP, MLPSpec};
use crate::numerics::{adam_step, AdamState, Matrix, NodeId, Tape};
use crate::rng::Rng;

const LN_2PI: f64 = 1.8378770664093453;
const SIGMA_INIT: f64 = 0.5;

// Stream indices under config.seed.
const STREAM_GEN_INIT: u64 = 0;
const STREAM_ENC_MEAN_INIT: u64 = 1;
const STREAM_ENC_LOGVAR_INIT: u64 = 2;
const STREAM_TRAIN_PERTURB: u64 = 3;
const STREAM_VAL_PERTURB: u64 = 4;
const STREAM_VAL_DRAWS: u64 = 5;
const STREAM_EPOCHS: u64 = 6;

/// One epoch of history: training and validation IWAE losses (negative
/// objectives, lower is better) and the current noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_iwae: f64,
    pub val_iwae: f64,
    pub sigma_hat: f64,
}

/// A finished run: the checkpoint at the validation-optimal epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: GeneratorModel,
    pub encoder: Encoder,
    pub history: Vec<EpochRecord>,
    pub selected_epoch: usize,
    /// Perturbation scale actually applied to the training data.
    pub sigma_tilde_used: f64,
}

impl TrainedModel {
    pub fn selected_val_iwae(&self) -> Option<f64> {
        self.history
            .iter()
            .find(|r| r.epoch == self.selected_epoch)
            .map(|r| r.val_iwae)
    }
}

/// Trains freshly initialized networks under `config`.
pub fn train(config: &TrainConfig, train_data: &Matrix, val_data: &Matrix) -> Result<TrainedModel> {
    config.validate()?;
    let d_out = train_data.cols();
    let gen_spec = MLPSpec::new(
        [vec![config.latent_dim], config.widths.clone(), vec![d_out]].concat(),
        config.activation,
    )?;
    let enc_widths = [vec![d_out], config.widths.clone(), vec![config.latent_dim]].concat();
    let mean_spec = MLPSpec::new(enc_widths.clone(), config.activation)?;
    let logvar_spec = MLPSpec::new(enc_widths, config.activation)?;

    let generator = MLP::init_with_rng(gen_spec, &mut crate::rng::stream(config.seed, STREAM_GEN_INIT));
    let mean_net = MLP::init_with_rng(mean_spec, &mut crate::rng::stream(config.seed, STREAM_ENC_MEAN_INIT));
    let logvar_net = MLP::init_with_rng(
        logvar_spec,
        &mut crate::rng::stream(config.seed, STREAM_ENC_LOGVAR_INIT),
    );

    let model = GeneratorModel::new(generator, SIGMA_INIT, (config.sigma_min, config.sigma_max))?;
    let encoder = Encoder::new(mean_net, logvar_net)?;
    train_from(config, model, encoder, None, train_data, val_data)
}

/// Trains from given initial networks, optionally under a prune mask that
/// pins zeroed generator parameters.
pub fn train_from(
    config: &TrainConfig,
    mut model: GeneratorModel,
    mut encoder: Encoder,
    mask: Option<&PruneMask>,
    train_data: &Matrix,
    val_data: &Matrix,
) -> Result<TrainedModel> {
    config.validate()?;
    if train_data.rows() == 0 || val_data.rows() == 0 {
        return Err(Error::EmptyInput("train/validation data"));
    }
    let d_out = train_data.cols();
    if val_data.cols() != d_out {
        return Err(Error::shape("train/val columns", d_out, val_data.cols()));
    }
    if model.generator.spec.output_dim() != d_out || encoder.data_dim() != d_out {
        return Err(Error::shape("model ambient dimension", model.generator.spec.output_dim(), d_out));
    }
    if model.generator.spec.input_dim() != config.latent_dim
        || encoder.latent_dim() != config.latent_dim
    {
        return Err(Error::shape(
            "model latent dimension",
            config.latent_dim,
            model.generator.spec.input_dim(),
        ));
    }
    if let Some(m) = mask {
        if m.keep.len() != model.generator.spec.param_count() {
            return Err(Error::shape("prune mask", model.generator.spec.param_count(), m.keep.len()));
        }
    }

    let sigma_tilde = config.resolve_sigma_tilde(train_data.rows())?;
    let spec = PerturbationSpec { sigma_tilde };

    if config.max_epochs == 0 {
        return Ok(TrainedModel {
            model,
            encoder,
            history: Vec::new(),
            selected_epoch: 0,
            sigma_tilde_used: sigma_tilde,
        });
    }

    // Perturbation is drawn once per run; training and validation data see
    // the same noise scale so the validation likelihood is comparable.
    let train_x = super::perturb_dataset(train_data, &spec, &mut crate::rng::stream(config.seed, STREAM_TRAIN_PERTURB))?;
    let val_x = super::perturb_dataset(val_data, &spec, &mut crate::rng::stream(config.seed, STREAM_VAL_PERTURB))?;

    // Fixed validation draws keep epoch selection noise-free across epochs.
    let d = config.latent_dim;
    let mut val_rng = crate::rng::stream(config.seed, STREAM_VAL_DRAWS);
    let val_draws: Vec<Matrix> = (0..config.k)
        .map(|_| gaussian_matrix(val_data.rows(), d, &mut val_rng))
        .collect();

    let mut flat = flatten(&model, &encoder);
    let gen_len = model.generator.spec.param_count();
    let mut adam = AdamState::new(flat.len(), config.lr);
    let mut epoch_rng = crate::rng::stream(config.seed, STREAM_EPOCHS);

    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, usize, GeneratorModel, Encoder)> = None;
    let started = Instant::now();

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_x.rows()).collect();
        order.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch).enumerate() {
            let xb = gather_rows(&train_x, chunk);
            let us: Vec<Matrix> = (0..config.k)
                .map(|_| gaussian_matrix(chunk.len(), d, &mut epoch_rng))
                .collect();

            let graph = BatchGraph::build(&model, &encoder, config.prior, &xb, &us);
            let loss = graph.loss_value();
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                    value: loss,
                });
            }
            loss_sum += loss * chunk.len() as f64;

            let mut grad = graph.flat_grads()?;
            if let Some(m) = mask {
                let masked = apply_mask(&grad[..gen_len], m)?;
                grad[..gen_len].copy_from_slice(&masked);
            }
            adam_step(&mut adam, &mut flat, &grad)?;
            if let Some(m) = mask {
                m.apply_to_params(&mut flat[..gen_len]);
            }
            unflatten(&mut model, &mut encoder, &flat)?;
            model.clamp_log_sigma();
            flat[gen_len] = model.log_sigma;
        }

        let train_iwae = loss_sum / train_x.rows() as f64;
        let val_iwae = iwae_batch_loss(&model, &encoder, config.prior, &val_x, &val_draws)?;
        history.push(EpochRecord {
            epoch,
            train_iwae,
            val_iwae,
            sigma_hat: model.sigma(),
        });
        if best.as_ref().map_or(true, |(b, _, _, _)| val_iwae < *b) {
            best = Some((val_iwae, epoch, model.clone(), encoder.clone()));
        }

        if let Some(budget) = config.time_budget_secs {
            if started.elapsed().as_secs_f64() > budget {
                break;
            }
        }
    }

    let (_, selected_epoch, model, encoder) = best.expect("max_epochs >= 1 records at least one epoch");
    Ok(TrainedModel {
        model,
        encoder,
        history,
        selected_epoch,
        sigma_tilde_used: sigma_tilde,
    })
}

/// Outcome of the two-round prune/retrain protocol.
#[derive(Debug, Clone)]
pub struct PruneTrainOutcome {
    pub dense: TrainedModel,
    pub sparse: TrainedModel,
    pub mask: PruneMask,
}

/// Dense training, then two magnitude-pruning rounds (25% and 50% of all
/// generator parameters) each followed by masked retraining with the same
/// epoch budget.
pub fn prune_train_pipeline(
    config: &TrainConfig,
    train_data: &Matrix,
    val_data: &Matrix,
) -> Result<PruneTrainOutcome> {
    let dense = train(config, train_data, val_data)?;

    let (net1, mask1) = prune_round(&dense.model.generator, 0.25)?;
    let model1 = GeneratorModel {
        generator: net1,
        ..dense.model.clone()
    };
    let retrain1 = train_from(config, model1, dense.encoder.clone(), Some(&mask1), train_data, val_data)?;

    let (net2, mask2) = prune_round(&retrain1.model.generator, 0.50)?;
    let model2 = GeneratorModel {
        generator: net2,
        ..retrain1.model.clone()
    };
    let sparse = train_from(config, model2, retrain1.encoder.clone(), Some(&mask2), train_data, val_data)?;

    Ok(PruneTrainOutcome {
        dense,
        sparse,
        mask: mask2,
    })
}

/// Negative mean IWAE objective of a batch under fixed reparameterization
/// draws (`u_draws`: K matrices, one row per example).
pub fn iwae_batch_loss(
    model: &GeneratorModel,
    encoder: &Encoder,
    prior: PriorKind,
    x: &Matrix,
    u_draws: &[Matrix],
) -> Result<f64> {
    let graph = BatchGraph::build(model, encoder, prior, x, u_draws);
    let loss = graph.loss_value();
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "batch IWAE loss".into(),
            index: 0,
            value: loss,
        });
    }
    Ok(loss)
}

/// Loss and flat gradient for one batch; exposed for gradient checking.
pub fn iwae_batch_loss_and_grad(
    model: &GeneratorModel,
    encoder: &Encoder,
    prior: PriorKind,
    x: &Matrix,
    u_draws: &[Matrix],
) -> Result<(f64, Vec<f64>)> {
    let graph = BatchGraph::build(model, encoder, prior, x, u_draws);
    let loss = graph.loss_value();
    let grad = graph.flat_grads()?;
    Ok((loss, grad))
}

/// Flat parameter order: generator, log_sigma, encoder mean, encoder logvar.
pub fn flatten(model: &GeneratorModel, encoder: &Encoder) -> Vec<f64> {
    let mut flat = model.generator.flat_params();
    flat.push(model.log_sigma);
    flat.extend(encoder.mean_net.flat_params());
    flat.extend(encoder.logvar_net.flat_params());
    flat
}

pub fn unflatten(model: &mut GeneratorModel, encoder: &mut Encoder, flat: &[f64]) -> Result<()> {
    let pg = model.generator.spec.param_count();
    let pm = encoder.mean_net.spec.param_count();
    let pl = encoder.logvar_net.spec.param_count();
    if flat.len() != pg + 1 + pm + pl {
        return Err(Error::shape("unflatten", pg + 1 + pm + pl, flat.len()));
    }
    model.generator.set_flat_params(&flat[..pg])?;
    model.log_sigma = flat[pg];
    encoder.mean_net.set_flat_params(&flat[pg + 1..pg + 1 + pm])?;
    encoder.logvar_net.set_flat_params(&flat[pg + 1 + pm..])?;
    Ok(())
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn gather_rows(data: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), data.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(data.row(i));
    }
    out
}

struct BatchGraph {
    tape: Tape,
    gen: MlpTapeParams,
    ls: NodeId,
    mean: MlpTapeParams,
    logvar: MlpTapeParams,
    loss: NodeId,
}

impl BatchGraph {
    // The recorded objective per example i is
    //   logsumexp_k [ log p_Z(Z_ik) + log phi_sigma(x_i - f(Z_ik)) - log q(Z_ik|x_i) ] - log K
    // with Z_ik = mu(x_i) + s(x_i) .* U_ik. Substituting the draw into log q
    // leaves -log q = (d/2) log 2pi + (1/2) sum logvar + (1/2) sum u^2,
    // whose only tape-dependent part is the logvar row sum.
    fn build(
        model: &GeneratorModel,
        encoder: &Encoder,
        prior: PriorKind,
        x: &Matrix,
        u_draws: &[Matrix],
    ) -> BatchGraph {
        let k = u_draws.len();
        assert!(k >= 1, "need at least one importance sample");
        let d = encoder.latent_dim() as f64;
        let d_out = model.generator.spec.output_dim() as f64;

        let mut tape = Tape::new();
        let gen = model.generator.register_on_tape(&mut tape);
        let mean_p = encoder.mean_net.register_on_tape(&mut tape);
        let logvar_p = encoder.logvar_net.register_on_tape(&mut tape);
        let ls = tape.leaf(Matrix::scalar(model.log_sigma), true);

        let x_id = tape.constant(x.clone());
        let mu = mean_p.forward(&mut tape, x_id);
        let lv_raw = logvar_p.forward(&mut tape, x_id);
        let lv = tape.clamp(lv_raw, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1);
        let half_lv = tape.scale(lv, 0.5);
        let s = tape.exp(half_lv);
        let lv_rs = tape.row_sum(lv);
        let lv_half_sum = tape.scale(lv_rs, 0.5);

        let neg2ls = tape.scale(ls, -2.0);
        let inv_sig2 = tape.exp(neg2ls);
        let ls_d = tape.scale(ls, -d_out);
        let log_det = tape.add_const(ls_d, -0.5 * d_out * LN_2PI);

        let mut log_weights = Vec::with_capacity(k);
        for u in u_draws {
            let u_id = tape.constant(u.clone());
            let su = tape.mul(s, u_id);
            let z = tape.add(mu, su);

            let log_prior = match prior {
                PriorKind::StandardNormal => {
                    let zsq = tape.square(z);
                    let zrs = tape.row_sum(zsq);
                    let half = tape.scale(zrs, -0.5);
                    tape.add_const(half, -0.5 * d * LN_2PI)
                }
                PriorKind::UniformUnitCube => {
                    // Indicator of the open unit cube carries no gradient.
                    let zv = tape.value(z);
                    let mut col = Matrix::zeros(zv.rows(), 1);
                    for i in 0..zv.rows() {
                        let inside = zv.row(i).iter().all(|&v| v > 0.0 && v < 1.0);
                        col.set(i, 0, if inside { 0.0 } else { f64::NEG_INFINITY });
                    }
                    tape.constant(col)
                }
            };

            let f = gen.forward(&mut tape, z);
            let e = tape.sub(x_id, f);
            let esq = tape.square(e);
            let resid = tape.row_sum(esq);
            let quad = tape.mul_scalar(resid, inv_sig2);
            let quad_half = tape.scale(quad, -0.5);
            let dec = tape.add_scalar(quad_half, log_det);

            let mut ucol = Matrix::zeros(u.rows(), 1);
            for i in 0..u.rows() {
                let usq: f64 = u.row(i).iter().map(|v| v * v).sum();
                ucol.set(i, 0, 0.5 * usq + 0.5 * d * LN_2PI);
            }
            let neg_logq_const = tape.constant(ucol);

            let t1 = tape.add(log_prior, dec);
            let t2 = tape.add(t1, lv_half_sum);
            log_weights.push(tape.add(t2, neg_logq_const));
        }

        let stacked = tape.concat_cols(&log_weights);
        let lse = tape.row_logsumexp(stacked);
        let obj = tape.add_const(lse, -(k as f64).ln());
        let neg = tape.scale(obj, -1.0);
        let loss = tape.mean(neg);

        BatchGraph {
            tape,
            gen,
            ls,
            mean: mean_p,
            logvar: logvar_p,
            loss,
        }
    }

    fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).get(0, 0)
    }

    fn flat_grads(mut self) -> Result<Vec<f64>> {
        self.tape.backward(self.loss)?;
        let mut grad = self.gen.flat_grads(&self.tape);
        grad.push(self.tape.grad(self.ls).map_or(0.0, |g| g.get(0, 0)));
        grad.extend(self.mean.flat_grads(&self.tape));
        grad.extend(self.logvar.flat_grads(&self.tape));
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{sample, Case, SyntheticSpec};

    fn tiny_dataset(n: usize, seed: u64) -> (Matrix, Matrix) {
        let spec = SyntheticSpec {
            case: Case::Case1,
            n_train: n,
            n_val: n / 2,
            n_test: 0,
            sigma_star: 0.05,
            seed,
        };
        let s = sample(&spec).unwrap();
        (s.train, s.val)
    }

    fn tiny_config(seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(2, vec![12], seed);
        cfg.k = 4;
        cfg.batch = 25;
        cfg.max_epochs = 3;
        cfg.sigma_tilde = Some(0.05);
        cfg
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (train_x, val_x) = tiny_dataset(60, 0);
        let mut cfg = tiny_config(1);
        cfg.max_epochs = 0;
        let out = train(&cfg, &train_x, &val_x).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.selected_epoch, 0);

        // Matches a from-scratch initialization with the same seed streams.
        let reference = {
            let mut cfg2 = cfg.clone();
            cfg2.max_epochs = 0;
            train(&cfg2, &train_x, &val_x).unwrap()
        };
        assert_eq!(flatten(&out.model, &out.encoder), flatten(&reference.model, &reference.encoder));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (train_x, val_x) = tiny_dataset(80, 2);
        let cfg = tiny_config(7);
        let a = train(&cfg, &train_x, &val_x).unwrap();
        let b = train(&cfg, &train_x, &val_x).unwrap();
        assert_eq!(flatten(&a.model, &a.encoder), flatten(&b.model, &b.encoder));
        assert_eq!(a.history, b.history);
        assert_eq!(a.selected_epoch, b.selected_epoch);
    }

    #[test]
    fn selected_epoch_is_validation_argmin() {
        let (train_x, val_x) = tiny_dataset(120, 3);
        let mut cfg = tiny_config(8);
        cfg.max_epochs = 6;
        let out = train(&cfg, &train_x, &val_x).unwrap();
        let best = out
            .history
            .iter()
            .min_by(|a, b| a.val_iwae.partial_cmp(&b.val_iwae).unwrap())
            .unwrap();
        assert_eq!(out.selected_epoch, best.epoch);
        assert!(out.selected_val_iwae().unwrap() <= out.history[0].val_iwae);
        let (lo, hi) = out.model.sigma_bounds;
        let sigma = out.model.sigma();
        assert!(sigma >= lo && sigma <= hi);
    }

    #[test]
    fn masked_training_keeps_zeros() {
        let (train_x, val_x) = tiny_dataset(60, 4);
        let cfg = tiny_config(9);
        let dense = train(&cfg, &train_x, &val_x).unwrap();
        let (net, mask) = prune_round(&dense.model.generator, 0.5).unwrap();
        let model = GeneratorModel {
            generator: net,
            ..dense.model.clone()
        };
        let retrained = train_from(&cfg, model, dense.encoder.clone(), Some(&mask), &train_x, &val_x).unwrap();
        let flat = retrained.model.generator.flat_params();
        for (i, &keep) in mask.keep.iter().enumerate() {
            if !keep {
                assert_eq!(flat[i], 0.0, "masked generator param {i} moved");
            }
        }
    }

    #[test]
    fn prune_pipeline_reaches_half_sparsity() {
        let (train_x, val_x) = tiny_dataset(60, 5);
        let mut cfg = tiny_config(10);
        cfg.max_epochs = 2;
        let out = prune_train_pipeline(&cfg, &train_x, &val_x).unwrap();
        let total = out.sparse.model.generator.spec.param_count();
        assert_eq!(out.mask.zero_count(), total / 2);
        assert_eq!(out.sparse.model.generator.nonzero_params(), total - total / 2);
    }

    #[test]
    fn batch_loss_agrees_with_pointwise_objective() {
        // The batched tape and the scalar evaluation path are independent
        // implementations of the same objective.
        let (train_x, _) = tiny_dataset(8, 6);
        let cfg = tiny_config(11);
        let dense = train(&cfg, &train_x, &gather_rows(&train_x, &[0, 1, 2, 3]))
            .unwrap();
        let model = dense.model;
        let enc = dense.encoder;

        let k = 3;
        let mut rng = crate::rng::seeded(40);
        let us: Vec<Matrix> = (0..k).map(|_| gaussian_matrix(train_x.rows(), 2, &mut rng)).collect();
        let batch_loss = iwae_batch_loss(&model, &enc, PriorKind::StandardNormal, &train_x, &us).unwrap();

        let sampler = super::super::LatentSampler::StandardNormal { dim: 2 };
        let mut total = 0.0;
        for i in 0..train_x.rows() {
            let x = train_x.row(i);
            let mut log_w = Vec::new();
            for u_k in &us {
                let (z, log_q) = super::super::encoder_sample(&enc, x, u_k.row(i)).unwrap();
                let lw = super::super::joint_log_density(&model, &sampler, x, &z).unwrap() - log_q;
                log_w.push(lw);
            }
            total += crate::numerics::logsumexp(&log_w).unwrap() - (k as f64).ln();
        }
        let pointwise_loss = -total / train_x.rows() as f64;
        assert!(
            (batch_loss - pointwise_loss).abs() < 1e-10,
            "batch {batch_loss} vs pointwise {pointwise_loss}"
        );
    }

    #[test]
    fn minibatch_gradient_matches_finite_differences() {
        let (train_x, val_x) = tiny_dataset(12, 7);
        let mut cfg = tiny_config(12);
        cfg.max_epochs = 1;
        let out = train(&cfg, &train_x, &val_x).unwrap();
        let mut model = out.model;
        let mut enc = out.encoder;

        let xb = gather_rows(&train_x, &[0, 1, 2, 3, 4, 5]);
        let mut rng = crate::rng::seeded(50);
        let us: Vec<Matrix> = (0..3).map(|_| gaussian_matrix(6, 2, &mut rng)).collect();

        let (_, grad) =
            iwae_batch_loss_and_grad(&model, &enc, PriorKind::StandardNormal, &xb, &us).unwrap();

        let flat0 = flatten(&model, &enc);
        let h = 1e-5;
        // Probe a deterministic spread of coordinates plus log_sigma.
        let gen_len = model.generator.spec.param_count();
        let mut probes: Vec<usize> = (0..flat0.len()).step_by(flat0.len() / 25 + 1).collect();
        probes.push(gen_len); // log_sigma slot
        for &j in &probes {
            let mut plus = flat0.clone();
            plus[j] += h;
            unflatten(&mut model, &mut enc, &plus).unwrap();
            let lp = iwae_batch_loss(&model, &enc, PriorKind::StandardNormal, &xb, &us).unwrap();
            let mut minus = flat0.clone();
            minus[j] -= h;
            unflatten(&mut model, &mut enc, &minus).unwrap();
            let lm = iwae_batch_loss(&model, &enc, PriorKind::StandardNormal, &xb, &us).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[j].abs()).max(1e-8);
            assert!(
                ((grad[j] - fd) / denom).abs() < 1e-3,
                "param {j}: autodiff {} vs fd {fd}",
                grad[j]
            );
        }
        unflatten(&mut model, &mut enc, &flat0).unwrap();
    }

    #[test]
    fn validation_loss_decreases_on_easy_problem() {
        let (train_x, val_x) = tiny_dataset(400, 8);
        let mut cfg = tiny_config(13);
        cfg.max_epochs = 8;
        cfg.batch = 50;
        let out = train(&cfg, &train_x, &val_x).unwrap();
        let first = out.history.first().unwrap().val_iwae;
        let selected = out.selected_val_iwae().unwrap();
        assert!(
            selected <= first,
            "selected epoch val {selected} vs first-epoch val {first}"
        );
    }
}
