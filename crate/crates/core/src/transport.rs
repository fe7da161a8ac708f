//! Constructive ground-truth generators: 1-D quantile transport, product
//! generators, and multi-chart mixtures selected by interval indicators.
//!
//! `F_Y^{-1}(F_Z(Z))` has distribution `Q` whenever `Z ~ P_Z`, so composing a
//! source CDF with a target quantile function gives an exact generator for
//! any 1-D target. Products extend this coordinatewise, and mixtures over a
//! partition of `(0,1)` glue chart generators into multi-chart supports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;

/// Closed-form 1-D laws with exact cdf/quantile pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Uniform01,
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Law {
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Law::Uniform01 => x.clamp(0.0, 1.0),
            Law::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            // Bisection on the quantile; the quantile is the primitively
            // implemented direction here.
            Law::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if standard_normal_quantile(mid) < z {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Generalized inverse of the CDF.
    pub fn quantile(self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match self {
            Law::Uniform01 => u,
            Law::Uniform { lo, hi } => lo + u * (hi - lo),
            Law::Exponential { rate } => -(-u).ln_1p() / rate,
            Law::Normal { mean, sd } => mean + sd * standard_normal_quantile(u),
        }
    }

    /// Open support used for domain checks on transport inputs.
    pub fn contains(self, x: f64) -> bool {
        match self {
            Law::Uniform01 => x > 0.0 && x < 1.0,
            Law::Uniform { lo, hi } => x > lo && x < hi,
            Law::Exponential { .. } => x > 0.0,
            Law::Normal { .. } => x.is_finite(),
        }
    }

    pub fn validate(self) -> Result<()> {
        let ok = match self {
            Law::Uniform01 => true,
            Law::Uniform { lo, hi } => lo < hi,
            Law::Exponential { rate } => rate > 0.0,
            Law::Normal { sd, .. } => sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate law {self:?}")))
        }
    }
}

/// Standard normal quantile by the AS241 (PPND16) rational approximation;
/// absolute error below 1e-9 over (0,1).
pub fn standard_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_9)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// The 1-D transport `z -> F_Y^{-1}(F_Z(z))`, pushing the source law onto
/// the target law. The composition is nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransport {
    pub source: Law,
    pub target: Law,
}

impl QuantileTransport {
    pub fn new(source: Law, target: Law) -> Result<Self> {
        source.validate()?;
        target.validate()?;
        Ok(QuantileTransport { source, target })
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if !self.source.contains(z) {
            return Err(Error::OutOfDomain {
                value: z,
                domain: "source law support",
            });
        }
        Ok(self.target.quantile(self.source.cdf(z)))
    }
}

/// Coordinatewise product of 1-D transports: an exact generator for a
/// product target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductGenerator {
    pub transports: Vec<QuantileTransport>,
}

impl ProductGenerator {
    pub fn new(transports: Vec<QuantileTransport>) -> Result<Self> {
        if transports.is_empty() {
            return Err(Error::EmptyInput("product generator"));
        }
        Ok(ProductGenerator { transports })
    }

    pub fn try_eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.transports.len() {
            return Err(Error::shape("product_generator", self.transports.len(), z.len()));
        }
        self.transports.iter().zip(z).map(|(t, &zi)| t.eval(zi)).collect()
    }
}

impl Generator for ProductGenerator {
    fn latent_dim(&self) -> usize {
        self.transports.len()
    }

    fn output_dim(&self) -> usize {
        self.transports.len()
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.try_eval(z).expect("latent outside source support")
    }
}

/// Mixture of chart generators glued along the first latent coordinate.
///
/// `(0,1)` is partitioned into consecutive intervals with lengths `pi_j`
/// (`I_1` open at 0, the rest closed on the left); the component whose
/// interval contains `z_1` is applied to the remaining latent coordinates.
pub struct ChartMixture {
    weights: Vec<f64>,
    cuts: Vec<f64>,
    components: Vec<Box<dyn Generator + Send + Sync>>,
    output_dim: usize,
    component_latent_dim: usize,
}

impl ChartMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Box<dyn Generator + Send + Sync>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::shape("chart_mixture", weights.len(), components.len()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        let component_latent_dim = components[0].latent_dim();
        let output_dim = components[0].output_dim();
        for c in &components {
            if c.latent_dim() != component_latent_dim || c.output_dim() != output_dim {
                return Err(Error::InvalidConfig("mixture components must share dimensions".into()));
            }
        }
        let mut cuts = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cuts.push(acc);
        }
        Ok(ChartMixture {
            weights,
            cuts,
            components,
            output_dim,
            component_latent_dim,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the interval containing `z1 in (0,1)`.
    pub fn chart_index(&self, z1: f64) -> Result<usize> {
        if !(z1 > 0.0 && z1 < 1.0) {
            return Err(Error::OutOfDomain {
                value: z1,
                domain: "(0, 1)",
            });
        }
        // I_1 = (0, c_1), I_j = [c_{j-1}, c_j).
        for (j, &c) in self.cuts.iter().enumerate() {
            if z1 < c {
                return Ok(j);
            }
        }
        Ok(self.cuts.len() - 1)
    }

    pub fn try_eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape("chart_mixture eval", self.latent_dim(), z.len()));
        }
        let j = self.chart_index(z[0])?;
        Ok(self.components[j].eval(&z[1..]))
    }
}

impl Generator for ChartMixture {
    fn latent_dim(&self) -> usize {
        self.component_latent_dim + 1
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.try_eval(z).expect("first latent coordinate outside (0,1)")
    }
}
