//! Post-hoc additive decomposition of a fitted generator.
//!
//! Draws latent points, evaluates the generator, and solves a least-squares
//! problem per output coordinate over an additive piecewise-linear basis:
//! `f_j(z) ~ intercept_j + sum_l g_jl(z_l)`. Components are mean-centered
//! over the latent sample (the intercept absorbs the means), which fixes the
//! additive-constant ambiguity. The residual size separates genuinely
//! additive generators from ones with interactions.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::numerics::{cholesky_solve, Matrix};
use crate::sieve_mle::LatentSampler;

/// Piecewise-linear basis layout: knot count per latent dimension and
/// optional explicit ranges. Absent ranges are derived from the 0.5% and
/// 99.5% quantiles of the drawn latent sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub knots_per_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<Vec<(f64, f64)>>,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            knots_per_dim: 32,
            ranges: None,
        }
    }
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.knots_per_dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 knots per dimension, got {}",
                self.knots_per_dim
            )));
        }
        if let Some(rs) = &self.ranges {
            for &(lo, hi) in rs {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidConfig(format!("degenerate basis range [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }
}

/// Fitted additive model. Each component `g_jl` is stored by its values at
/// the knots of dimension `l` (the hat basis interpolates); evaluation is
/// piecewise linear between knots and extrapolates linearly beyond the end
/// knots, so globally linear targets are represented exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GAMFit {
    /// Knot positions per latent dimension.
    pub knots: Vec<Vec<f64>>,
    /// Per-output intercepts.
    pub intercepts: Vec<f64>,
    /// Component knot values, indexed `[output j][latent l][knot k]`.
    pub coeffs: Vec<Vec<Vec<f64>>>,
    /// Root-mean-square residual of the fit on the latent sample.
    pub residual_rms: f64,
}

impl GAMFit {
    pub fn latent_dim(&self) -> usize {
        self.knots.len()
    }

    pub fn output_dim(&self) -> usize {
        self.intercepts.len()
    }

    /// Evaluates component `g_jl` at `z`.
    pub fn component(&self, j: usize, l: usize, z: f64) -> f64 {
        eval_piecewise_linear(&self.knots[l], &self.coeffs[j][l], z)
    }
}

impl Generator for GAMFit {
    fn latent_dim(&self) -> usize {
        self.knots.len()
    }

    fn output_dim(&self) -> usize {
        self.intercepts.len()
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.latent_dim());
        (0..self.output_dim())
            .map(|j| {
                self.intercepts[j]
                    + z.iter()
                        .enumerate()
                        .map(|(l, &zl)| self.component(j, l, zl))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// The fit as a callable additive generator (usable by samplers and the
/// transport evaluation).
pub fn gam_generator(fit: &GAMFit) -> &dyn Generator {
    fit
}

fn eval_piecewise_linear(knots: &[f64], values: &[f64], z: f64) -> f64 {
    let m = knots.len();
    // Segment index: linear continuation beyond the end knots.
    let seg = if z <= knots[0] {
        0
    } else if z >= knots[m - 1] {
        m - 2
    } else {
        knots.partition_point(|&t| t <= z) - 1
    };
    let (t0, t1) = (knots[seg], knots[seg + 1]);
    let w = (z - t0) / (t1 - t0);
    values[seg] * (1.0 - w) + values[seg + 1] * w
}

// Hat-basis values at z for one dimension (two adjacent entries nonzero;
// beyond the end knots the last segment's linear forms continue, so weights
// may leave [0,1] but still sum to 1).
fn basis_row(knots: &[f64], z: f64, out: &mut [f64]) {
    let m = knots.len();
    out.fill(0.0);
    let seg = if z <= knots[0] {
        0
    } else if z >= knots[m - 1] {
        m - 2
    } else {
        knots.partition_point(|&t| t <= z) - 1
    };
    let (t0, t1) = (knots[seg], knots[seg + 1]);
    let w = (z - t0) / (t1 - t0);
    out[seg] = 1.0 - w;
    out[seg + 1] = w;
}

/// Least-squares additive fit of a generator on `n` latent draws.
///
/// Solves the normal equations (ridge `1e-8 I`) for all output coordinates
/// at once, then centers every component over the drawn sample. Errors if
/// the system stays rank deficient beyond the ridge.
pub fn fit_gam(
    gen: &dyn Generator,
    sampler: &LatentSampler,
    n: usize,
    basis: &BasisSpec,
    seed: u64,
) -> Result<GAMFit> {
    basis.validate()?;
    let d = gen.latent_dim();
    let d_out = gen.output_dim();
    if sampler.dim() != d {
        return Err(Error::shape("fit_gam sampler", d, sampler.dim()));
    }
    let m = basis.knots_per_dim;
    if n < d * m + 1 {
        return Err(Error::InvalidConfig(format!(
            "need at least {} latent draws for {} basis functions, got {n}",
            d * m + 1,
            d * m
        )));
    }
    if let Some(rs) = &basis.ranges {
        if rs.len() != d {
            return Err(Error::shape("basis ranges", d, rs.len()));
        }
    }

    let mut rng = crate::rng::stream(seed, 0);
    let mut latents = Matrix::zeros(n, d);
    let mut buf = vec![0.0; d];
    for i in 0..n {
        sampler.sample_into(&mut rng, &mut buf);
        latents.row_mut(i).copy_from_slice(&buf);
    }

    let ranges: Vec<(f64, f64)> = match &basis.ranges {
        Some(rs) => rs.clone(),
        None => (0..d)
            .map(|l| {
                let mut col: Vec<f64> = (0..n).map(|i| latents.get(i, l)).collect();
                col.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                let lo = col[((n - 1) as f64 * 0.005).floor() as usize];
                let hi = col[((n - 1) as f64 * 0.995).floor() as usize];
                (lo, hi)
            })
            .collect(),
    };
    let knots: Vec<Vec<f64>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("degenerate latent range [{lo}, {hi}]")));
            }
            Ok((0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect())
        })
        .collect::<Result<_>>()?;

    // Design matrix: intercept column then d blocks of hat values.
    let p = 1 + d * m;
    let mut design = Matrix::zeros(n, p);
    for i in 0..n {
        let z_row: Vec<f64> = latents.row(i).to_vec();
        let row = design.row_mut(i);
        row[0] = 1.0;
        for (l, &z) in z_row.iter().enumerate() {
            basis_row(&knots[l], z, &mut row[1 + l * m..1 + (l + 1) * m]);
        }
    }

    let mut targets = Matrix::zeros(n, d_out);
    for i in 0..n {
        let y = gen.eval(latents.row(i));
        targets.row_mut(i).copy_from_slice(&y);
    }

    let mut xtx = design.transpose().matmul(&design)?;
    for i in 0..p {
        xtx.set(i, i, xtx.get(i, i) + 1e-8);
    }
    let xty = design.transpose().matmul(&targets)?;
    let solution = cholesky_solve(&xtx, &xty)?;

    // Residual RMS before centering (centering only moves constants around).
    let fitted = design.matmul(&solution)?;
    let mut rss = 0.0;
    for i in 0..n {
        for j in 0..d_out {
            let r = targets.get(i, j) - fitted.get(i, j);
            rss += r * r;
        }
    }
    let residual_rms = (rss / (n * d_out) as f64).sqrt();

    // Column means of the hat blocks give each component's sample mean.
    let mut col_means = vec![0.0; p];
    for i in 0..n {
        for (cm, &v) in col_means.iter_mut().zip(design.row(i)) {
            *cm += v;
        }
    }
    for cm in &mut col_means {
        *cm /= n as f64;
    }

    let mut intercepts = vec![0.0; d_out];
    let mut coeffs = vec![vec![vec![0.0; m]; d]; d_out];
    for j in 0..d_out {
        let mut intercept = solution.get(0, j);
        for l in 0..d {
            let block = 1 + l * m;
            let mean_jl: f64 = (0..m).map(|k| solution.get(block + k, j) * col_means[block + k]).sum();
            for k in 0..m {
                // Hats partition unity, so shifting every knot value by the
                // sample mean centers the component exactly.
                coeffs[j][l][k] = solution.get(block + k, j) - mean_jl;
            }
            intercept += mean_jl;
        }
        intercepts[j] = intercept;
    }

    Ok(GAMFit {
        knots,
        intercepts,
        coeffs,
        residual_rms,
    })
}

/// Component curves as CSV rows `(j, l, z, g)` evaluated at the knots.
pub fn write_components_csv(path: &Path, fit: &GAMFit) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "output,latent,z,g")?;
    for j in 0..fit.output_dim() {
        for l in 0..fit.latent_dim() {
            for k in 0..fit.knots[l].len() {
                writeln!(
                    w,
                    "{j},{l},{:.16e},{:.16e}",
                    fit.knots[l][k], fit.coeffs[j][l][k]
                )?;
            }
        }
    }
    Ok(())
}
