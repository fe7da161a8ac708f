//! Sparse feed-forward networks: `f(z) = W_L rho_{v_L} ... W_1 rho_{v_1} W_0 z`.
//!
//! Shift vectors sit inside the activations (`rho_v(z) = act(z - v)`); there
//! is no bias on the final affine. Sparsity comes from iterative magnitude
//! pruning: the smallest-magnitude parameters are zeroed and a keep mask
//! pins them at zero through retraining.
//!
//! Parameters flatten in one canonical order — `W_0, v_1, W_1, v_2, ...,
//! v_L, W_L`, row-major within each matrix — used by pruning, masking and
//! the optimizer alike.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::numerics::{Activation, Matrix, NodeId, Tape};
use crate::rng::Rng;

/// Architecture metadata: the full width vector `(p_0, ..., p_{L+1})` and the
/// activation kind. `L` is the number of hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MLPSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "width vector needs at least (input, output), got {widths:?}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!("all widths must be >= 1, got {widths:?}")));
        }
        activation.validate()?;
        Ok(MLPSpec { widths, activation })
    }

    /// Number of hidden layers L.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total count of weight and shift parameters.
    pub fn param_count(&self) -> usize {
        let l = self.depth();
        let weights: usize = (0..=l).map(|j| self.widths[j + 1] * self.widths[j]).sum();
        let shifts: usize = (1..=l).map(|j| self.widths[j]).sum();
        weights + shifts
    }
}

/// A concrete network: weights `W_0..W_L` and shifts `v_1..v_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MLP {
    pub spec: MLPSpec,
    pub weights: Vec<Matrix>,
    pub shifts: Vec<Vec<f64>>,
}

impl MLP {
    /// He-scaled random weights (std `sqrt(2/fan_in)`), zero shifts.
    /// Bit-identical for identical `(spec, seed)`.
    pub fn init(spec: MLPSpec, seed: u64) -> MLP {
        let mut rng = crate::rng::seeded(seed);
        Self::init_with_rng(spec, &mut rng)
    }

    pub fn init_with_rng(spec: MLPSpec, rng: &mut Rng) -> MLP {
        let l = spec.depth();
        let mut weights = Vec::with_capacity(l + 1);
        for j in 0..=l {
            let (rows, cols) = (spec.widths[j + 1], spec.widths[j]);
            let std = (2.0 / cols as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
            weights.push(Matrix::from_vec(rows, cols, data).unwrap());
        }
        let shifts = (1..=l).map(|j| vec![0.0; spec.widths[j]]).collect();
        MLP {
            spec,
            weights,
            shifts,
        }
    }

    /// Forward pass on one latent vector: alternating affine and shifted
    /// activation, no activation after the final affine.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.spec.input_dim() {
            return Err(Error::shape("forward", self.spec.input_dim(), z.len()));
        }
        let l = self.spec.depth();
        let mut cur = z.to_vec();
        for j in 0..l {
            let lin = crate::numerics::affine(&self.weights[j], &cur)?;
            cur = crate::numerics::activation(self.spec.activation, &lin, &self.shifts[j])?;
        }
        crate::numerics::affine(&self.weights[l], &cur)
    }

    /// Forward pass on a batch, one example per row.
    pub fn forward_batch(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.spec.input_dim() {
            return Err(Error::shape("forward_batch", self.spec.input_dim(), z.cols()));
        }
        let l = self.spec.depth();
        let slope = self.spec.activation.slope();
        let mut cur = z.clone();
        for j in 0..l {
            let mut lin = cur.matmul_transposed(&self.weights[j])?;
            let shift = &self.shifts[j];
            for r in 0..lin.rows() {
                let row = lin.row_mut(r);
                for (x, &v) in row.iter_mut().zip(shift) {
                    let t = *x - v;
                    *x = if t > 0.0 { t } else { slope * t };
                }
            }
            cur = lin;
        }
        cur.matmul_transposed(&self.weights[l])
    }

    /// Parameters in the canonical flat order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        let l = self.spec.depth();
        for j in 0..=l {
            out.extend_from_slice(self.weights[j].data());
            if j < l {
                out.extend_from_slice(&self.shifts[j]);
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.spec.param_count() {
            return Err(Error::shape("set_flat_params", self.spec.param_count(), flat.len()));
        }
        let l = self.spec.depth();
        let mut off = 0;
        for j in 0..=l {
            let n = self.weights[j].rows() * self.weights[j].cols();
            self.weights[j].data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            if j < l {
                let s = self.shifts[j].len();
                self.shifts[j].copy_from_slice(&flat[off..off + s]);
                off += s;
            }
        }
        Ok(())
    }

    /// Count of exactly-nonzero parameters (the sparsity `s`).
    pub fn nonzero_params(&self) -> usize {
        self.flat_params().iter().filter(|&&p| p != 0.0).count()
    }

    /// Largest absolute weight or shift entry (diagnostic only; the class
    /// constraint is reported, not enforced).
    pub fn max_entry_norm(&self) -> f64 {
        self.flat_params().iter().fold(0.0f64, |a, p| a.max(p.abs()))
    }

    /// max_i |f(z_i)|_inf over the rows of a sample (diagnostic).
    pub fn sup_norm_on_sample(&self, z: &Matrix) -> Result<f64> {
        let out = self.forward_batch(z)?;
        Ok(out.max_abs())
    }

    /// Registers weights and shifts as gradient leaves on a tape.
    pub fn register_on_tape(&self, tape: &mut Tape) -> MlpTapeParams {
        let l = self.spec.depth();
        let weights = self.weights.iter().map(|w| tape.leaf(w.clone(), true)).collect();
        let shifts = (0..l)
            .map(|j| tape.leaf(Matrix::row_vector(&self.shifts[j]), true))
            .collect();
        MlpTapeParams {
            weights,
            shifts,
            slope: self.spec.activation.slope(),
        }
    }
}

impl Generator for MLP {
    fn latent_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.forward(z).expect("latent dimension mismatch")
    }
}

/// Tape handles for one registered network.
pub struct MlpTapeParams {
    pub weights: Vec<NodeId>,
    pub shifts: Vec<NodeId>,
    slope: f64,
}

impl MlpTapeParams {
    /// Batch forward on the tape (`x`: one example per row).
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let l = self.shifts.len();
        let mut cur = x;
        for j in 0..l {
            let lin = tape.matmul_nt(cur, self.weights[j]);
            cur = tape.shifted_activation(lin, self.shifts[j], self.slope);
        }
        tape.matmul_nt(cur, self.weights[l])
    }

    /// Gradients in the canonical flat order, zeros where a parameter did not
    /// influence the output.
    pub fn flat_grads(&self, tape: &Tape) -> Vec<f64> {
        let mut out = Vec::new();
        let l = self.shifts.len();
        for j in 0..=l {
            match tape.grad(self.weights[j]) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat(0.0).take(tape.value(self.weights[j]).data().len())),
            }
            if j < l {
                match tape.grad(self.shifts[j]) {
                    Some(g) => out.extend_from_slice(g.data()),
                    None => out.extend(std::iter::repeat(0.0).take(tape.value(self.shifts[j]).data().len())),
                }
            }
        }
        out
    }
}

/// Keep/zero flags over the canonical flat parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub keep: Vec<bool>,
    pub zero_fraction: f64,
}

impl PruneMask {
    pub fn all_keep(len: usize) -> Self {
        PruneMask {
            keep: vec![true; len],
            zero_fraction: 0.0,
        }
    }

    pub fn zero_count(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    /// Zero out masked entries of a parameter vector (idempotent).
    pub fn apply_to_params(&self, params: &mut [f64]) {
        for (p, &k) in params.iter_mut().zip(&self.keep) {
            if !k {
                *p = 0.0;
            }
        }
    }
}

/// Magnitude pruning up to a total zero fraction.
///
/// Exactly `floor(total_fraction * param_count)` parameters end up zero
/// (counting those already zero), chosen smallest-absolute-value first among
/// the currently nonzero entries, ties broken by ascending flat index. When
/// the existing zero set already exceeds the target it is kept as is, so
/// repeated rounds are monotone.
pub fn prune_round(net: &MLP, total_fraction: f64) -> Result<(MLP, PruneMask)> {
    if !(0.0..=1.0).contains(&total_fraction) {
        return Err(Error::OutOfDomain {
            value: total_fraction,
            domain: "[0, 1]",
        });
    }
    let flat = net.flat_params();
    let total = flat.len();
    let target = (total_fraction * total as f64).floor() as usize;

    let mut keep = vec![true; total];
    let mut zero_count = 0;
    for (i, &p) in flat.iter().enumerate() {
        if p == 0.0 {
            keep[i] = false;
            zero_count += 1;
        }
    }
    if target > zero_count {
        let mut candidates: Vec<usize> = (0..total).filter(|&i| keep[i]).collect();
        candidates.sort_by(|&a, &b| flat[a].abs().partial_cmp(&flat[b].abs()).unwrap().then(a.cmp(&b)));
        for &i in candidates.iter().take(target - zero_count) {
            keep[i] = false;
        }
        zero_count = target;
    }

    let mask = PruneMask {
        zero_fraction: zero_count as f64 / total as f64,
        keep,
    };
    let mut pruned_flat = flat;
    mask.apply_to_params(&mut pruned_flat);
    let mut pruned = net.clone();
    pruned.set_flat_params(&pruned_flat)?;
    Ok((pruned, mask))
}

/// Zeroes gradient entries at masked positions so retraining cannot move
/// pruned parameters off zero.
pub fn apply_mask(grad: &[f64], mask: &PruneMask) -> Result<Vec<f64>> {
    if grad.len() != mask.keep.len() {
        return Err(Error::shape("apply_mask", mask.keep.len(), grad.len()));
    }
    Ok(grad
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g } else { 0.0 })
        .collect())
}

/// On-disk checkpoint: generator network, decoder noise, seed, optional mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: MLPSpec,
    pub weights: Vec<Vec<f64>>,
    pub shifts: Vec<Vec<f64>>,
    pub log_sigma: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

impl Checkpoint {
    pub fn from_parts(mlp: &MLP, log_sigma: f64, seed: u64, mask: Option<&PruneMask>) -> Self {
        Checkpoint {
            spec: mlp.spec.clone(),
            weights: mlp.weights.iter().map(|w| w.data().to_vec()).collect(),
            shifts: mlp.shifts.clone(),
            log_sigma,
            seed,
            mask: mask.map(|m| m.keep.clone()),
        }
    }

    pub fn to_mlp(&self) -> Result<MLP> {
        let spec = MLPSpec::new(self.spec.widths.clone(), self.spec.activation)?;
        let l = spec.depth();
        if self.weights.len() != l + 1 || self.shifts.len() != l {
            return Err(Error::InvalidConfig(format!(
                "checkpoint has {} weight / {} shift layers for depth {l}",
                self.weights.len(),
                self.shifts.len()
            )));
        }
        let mut weights = Vec::with_capacity(l + 1);
        for (j, data) in self.weights.iter().enumerate() {
            weights.push(Matrix::from_vec(spec.widths[j + 1], spec.widths[j], data.clone())?);
        }
        for (j, s) in self.shifts.iter().enumerate() {
            if s.len() != spec.widths[j + 1] {
                return Err(Error::shape("checkpoint shifts", spec.widths[j + 1], s.len()));
            }
        }
        Ok(MLP {
            spec,
            weights,
            shifts: self.shifts.clone(),
        })
    }

    pub fn mask(&self) -> Option<PruneMask> {
        self.mask.as_ref().map(|keep| PruneMask {
            zero_fraction: keep.iter().filter(|&&k| !k).count() as f64 / keep.len() as f64,
            keep: keep.clone(),
        })
    }
}

/// Writes a checkpoint as JSON with floats in 17-significant-digit decimal,
/// which round-trips f64 exactly.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "{{\"spec\":{}", serde_json::to_string(&ckpt.spec)?)?;
    write!(w, ",\"weights\":[")?;
    for (i, layer) in ckpt.weights.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write_f64_array(&mut w, layer)?;
    }
    write!(w, "],\"shifts\":[")?;
    for (i, layer) in ckpt.shifts.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write_f64_array(&mut w, layer)?;
    }
    write!(w, "],\"log_sigma\":{:.16e},\"seed\":{}", ckpt.log_sigma, ckpt.seed)?;
    if let Some(mask) = &ckpt.mask {
        write!(w, ",\"mask\":{}", serde_json::to_string(mask)?)?;
    }
    writeln!(w, "}}")?;
    Ok(())
}

fn write_f64_array(w: &mut impl Write, values: &[f64]) -> Result<()> {
    write!(w, "[")?;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(w, "{v:.16e}")?;
    }
    write!(w, "]")?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{adam_step, AdamState};

    fn leaky_spec(widths: &[usize]) -> MLPSpec {
        MLPSpec::new(widths.to_vec(), Activation::LeakyRelu(0.01)).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = leaky_spec(&[3, 16, 2]);
        let a = MLP::init(spec.clone(), 42);
        let b = MLP::init(spec, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn zeroed_one_by_one_net_is_constant_zero() {
        let spec = MLPSpec::new(vec![1, 1], Activation::Relu).unwrap();
        let mut net = MLP::init(spec, 0);
        net.set_flat_params(&[0.0]).unwrap();
        for z in [-3.0, 0.0, 7.5] {
            assert_eq!(net.forward(&[z]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn he_init_std_matches_fan_in() {
        // Pooled over 10 seeds, width-200 layers.
        let spec = leaky_spec(&[200, 200, 200]);
        for layer in 0..2 {
            let fan_in = 200.0f64;
            let expected = (2.0 / fan_in).sqrt();
            let mut sq = 0.0;
            let mut n = 0usize;
            for seed in 0..10 {
                let net = MLP::init(spec.clone(), seed);
                for &w in net.weights[layer].data() {
                    sq += w * w;
                    n += 1;
                }
            }
            let std = (sq / n as f64).sqrt();
            assert!(
                (std - expected).abs() < 0.2 * expected,
                "layer {layer}: std {std} vs expected {expected}"
            );
        }
    }

    #[test]
    fn forward_examples() {
        let spec = MLPSpec::new(vec![1, 1, 1], Activation::Relu).unwrap();
        let mut net = MLP::init(spec, 0);
        // W0 = 1, v1 = 0, W1 = 1.
        net.set_flat_params(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0]);

        let spec = leaky_spec(&[2, 4, 3]);
        let mut net = MLP::init(spec, 1);
        let zeros = vec![0.0; net.spec.param_count()];
        net.set_flat_params(&zeros).unwrap();
        assert_eq!(net.forward(&[0.3, -0.7]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn forward_batch_matches_single() {
        let spec = leaky_spec(&[3, 8, 8, 2]);
        let net = MLP::init(spec, 5);
        let mut rng = crate::rng::seeded(6);
        use rand::Rng as _;
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        let out = net.forward_batch(&batch).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let single = net.forward(row).unwrap();
            for j in 0..2 {
                assert!((out.get(i, j) - single[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_lipschitz_bound_holds() {
        // |f(z) - f(z')| <= prod_j ||W_j||_F * |z - z'| for 1-Lipschitz
        // activations; Frobenius upper-bounds the operator norm.
        use rand::Rng as _;
        let spec = leaky_spec(&[3, 10, 10, 2]);
        for seed in 0..5 {
            let net = MLP::init(spec.clone(), seed);
            let bound: f64 = net.weights.iter().map(Matrix::frobenius_norm).product();
            let mut rng = crate::rng::seeded(100 + seed);
            for _ in 0..20 {
                let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let zp: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let fz = net.forward(&z).unwrap();
                let fzp = net.forward(&zp).unwrap();
                let dz: f64 = z.iter().zip(&zp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let df: f64 = fz.iter().zip(&fzp).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(df <= bound * dz + 1e-12, "df {df} > bound {bound} * dz {dz}");
            }
        }
    }

    #[test]
    fn relu_forward_is_piecewise_linear() {
        // Dyadic weights and inputs make every operation exact, so the
        // interpolation identity inside one activation region is bit-exact
        // (well within the 4-ulp budget).
        let spec = MLPSpec::new(vec![2, 4, 2], Activation::Relu).unwrap();
        let mut net = MLP::init(spec, 0);
        let params: Vec<f64> = (0..net.spec.param_count()).map(|i| ((i % 7) as f64 - 3.0) / 8.0).collect();
        net.set_flat_params(&params).unwrap();

        let pattern = |z: &[f64]| -> Vec<bool> {
            let lin = crate::numerics::affine(&net.weights[0], z).unwrap();
            lin.iter().zip(&net.shifts[0]).map(|(&x, &v)| x - v > 0.0).collect()
        };

        let z = [0.5, 0.25];
        let zp = [0.625, 0.375];
        assert_eq!(pattern(&z), pattern(&zp), "need a same-region pair");
        let mid: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let f_mid = net.forward(&mid).unwrap();
        let fz = net.forward(&z).unwrap();
        let fzp = net.forward(&zp).unwrap();
        for j in 0..2 {
            let interp = 0.5 * fz[j] + 0.5 * fzp[j];
            assert_eq!(f_mid[j], interp);
        }
    }

    #[test]
    fn prune_round_zeroes_two_smallest() {
        let spec = MLPSpec::new(vec![2, 4], Activation::Relu).unwrap();
        let mut net = MLP::init(spec, 0);
        net.set_flat_params(&[0.5, -0.1, 0.3, -0.05, 0.2, 0.9, -0.4, 0.15]).unwrap();
        let (pruned, mask) = prune_round(&net, 0.25).unwrap();
        assert_eq!(
            pruned.flat_params(),
            vec![0.5, 0.0, 0.3, 0.0, 0.2, 0.9, -0.4, 0.15]
        );
        assert_eq!(mask.zero_count(), 2);
        assert_eq!(mask.zero_fraction, 0.25);
    }

    #[test]
    fn prune_fraction_zero_is_identity() {
        let spec = leaky_spec(&[3, 8, 2]);
        let mut net = MLP::init(spec, 3);
        let mut rng = crate::rng::seeded(4);
        use rand::Rng as _;
        let params: Vec<f64> = (0..net.spec.param_count()).map(|_| rng.gen_range(0.1..1.0)).collect();
        net.set_flat_params(&params).unwrap();
        let (pruned, mask) = prune_round(&net, 0.0).unwrap();
        assert_eq!(pruned, net);
        assert_eq!(mask.zero_count(), 0);
    }

    #[test]
    fn prune_mask_records_existing_zeros() {
        // Zero-initialized shifts count toward the zero set, keeping rounds
        // monotone even at fraction 0.
        let spec = leaky_spec(&[3, 8, 2]);
        let net = MLP::init(spec, 3);
        let (pruned, mask) = prune_round(&net, 0.0).unwrap();
        assert_eq!(pruned, net);
        assert_eq!(mask.zero_count(), 8);
    }

    #[test]
    fn prune_rejects_out_of_range_fraction() {
        let spec = leaky_spec(&[3, 8, 2]);
        let net = MLP::init(spec, 3);
        assert!(prune_round(&net, 1.5).is_err());
        assert!(prune_round(&net, -0.1).is_err());
    }

    #[test]
    fn two_rounds_reach_half_zeros() {
        // Shifts start at zero, so perturb all parameters first to mimic a
        // trained net.
        let spec = leaky_spec(&[4, 16, 16, 3]);
        let mut net = MLP::init(spec, 9);
        let mut rng = crate::rng::seeded(10);
        use rand::Rng as _;
        let params: Vec<f64> = (0..net.spec.param_count()).map(|_| rng.gen_range(0.01..1.0)).collect();
        net.set_flat_params(&params).unwrap();

        let total = net.spec.param_count();
        let (net1, mask1) = prune_round(&net, 0.25).unwrap();
        assert_eq!(mask1.zero_count(), total / 4);
        let (net2, mask2) = prune_round(&net1, 0.50).unwrap();
        assert_eq!(mask2.zero_count(), total / 2);
        assert_eq!(net2.nonzero_params(), total - total / 2);
        // Monotone: every zero from round one stays zero.
        for i in 0..total {
            if !mask1.keep[i] {
                assert!(!mask2.keep[i]);
            }
        }
    }

    #[test]
    fn apply_mask_identities() {
        let grad = vec![1.0, -2.0, 3.0];
        let keep = PruneMask::all_keep(3);
        assert_eq!(apply_mask(&grad, &keep).unwrap(), grad);
        let none = PruneMask {
            keep: vec![false; 3],
            zero_fraction: 1.0,
        };
        assert_eq!(apply_mask(&grad, &none).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn masked_adam_keeps_pruned_params_at_zero() {
        let spec = leaky_spec(&[2, 8, 1]);
        let mut net = MLP::init(spec, 17);
        let mut rng = crate::rng::seeded(18);
        use rand::Rng as _;
        let params: Vec<f64> = (0..net.spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        net.set_flat_params(&params).unwrap();
        let (pruned, mask) = prune_round(&net, 0.5).unwrap();

        let mut flat = pruned.flat_params();
        let mut state = AdamState::new(flat.len(), 1e-2);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let masked = apply_mask(&raw, &mask).unwrap();
            adam_step(&mut state, &mut flat, &masked).unwrap();
        }
        for (i, &k) in mask.keep.iter().enumerate() {
            if !k {
                assert_eq!(flat[i], 0.0, "masked param {i} drifted");
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let spec = leaky_spec(&[3, 8, 2]);
        let net = MLP::init(spec, 21);
        let (pruned, mask) = prune_round(&net, 0.25).unwrap();
        let ckpt = Checkpoint::from_parts(&pruned, -0.3522, 21, Some(&mask));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        write_checkpoint(&path, &ckpt).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.to_mlp().unwrap(), pruned);
        assert_eq!(back.mask().unwrap(), mask);
    }
}
