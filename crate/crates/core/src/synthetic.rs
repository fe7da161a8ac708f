//! Ground-truth generators and samplers for the synthetic experiments.
//!
//! Three 1-D-manifold cases in the plane (a curve, a circle, and two
//! disjoint arcs with a discontinuous generator), the Swiss roll and the
//! uniform sphere in 3-space, and two latent-factor models in 5-space (an
//! additive one and a non-additive one). Samples are `X = f(Z) + eps` with
//! isotropic Gaussian ambient noise of scale `sigma_star` (zero for exact
//! manifold data) and deterministic train/validation/test splits per seed.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::numerics::Matrix;
use crate::rng::Rng;

const TAU: f64 = std::f64::consts::TAU;

/// The implemented ground-truth distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Case1,
    Case2,
    Case3,
    SwissRoll,
    Sphere,
    Model1,
    Model2,
}

impl Case {
    /// Latent dimension of the generator form, where one exists. The sphere
    /// is sampled directly (normalized Gaussians) and has no latent map.
    pub fn latent_dim(self) -> Option<usize> {
        match self {
            Case::Case1 | Case::Case2 | Case::Case3 => Some(1),
            Case::SwissRoll => Some(2),
            Case::Sphere => None,
            Case::Model1 | Case::Model2 => Some(3),
        }
    }

    pub fn ambient_dim(self) -> usize {
        match self {
            Case::Case1 | Case::Case2 | Case::Case3 => 2,
            Case::SwissRoll | Case::Sphere => 3,
            Case::Model1 | Case::Model2 => 5,
        }
    }

    pub fn parse(name: &str) -> Result<Case> {
        match name {
            "case1" => Ok(Case::Case1),
            "case2" => Ok(Case::Case2),
            "case3" => Ok(Case::Case3),
            "swiss_roll" => Ok(Case::SwissRoll),
            "sphere" => Ok(Case::Sphere),
            "model1" => Ok(Case::Model1),
            "model2" => Ok(Case::Model2),
            other => Err(Error::InvalidConfig(format!("unknown case '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Case3 => "case3",
            Case::SwissRoll => "swiss_roll",
            Case::Sphere => "sphere",
            Case::Model1 => "model1",
            Case::Model2 => "model2",
        }
    }
}

/// Exact evaluation of the true generator for `case` at latent `z`.
///
/// Case 3 is discontinuous: the upper-offset branch applies strictly for
/// `z > 0.5`, the lower-offset branch otherwise (including exactly 0.5).
pub fn true_generator(case: Case, z: &[f64]) -> Result<Vec<f64>> {
    let expected = case.latent_dim().ok_or_else(|| {
        Error::InvalidConfig("sphere has no latent generator; sample it directly".into())
    })?;
    if z.len() != expected {
        return Err(Error::shape("true_generator", expected, z.len()));
    }
    Ok(match case {
        Case::Case1 => {
            let z = z[0];
            vec![6.0 * (z - 0.5), 0.5 * (z - 2.0) * z * (z + 2.0)]
        }
        Case::Case2 => {
            let z = z[0];
            vec![2.0 * (TAU * z).cos(), 2.0 * (TAU * z).sin()]
        }
        Case::Case3 => {
            let z = z[0];
            if z > 0.5 {
                vec![2.0 * (TAU * z).cos() + 1.0, 2.0 * (TAU * z).sin() + 0.4]
            } else {
                vec![2.0 * (TAU * z).cos() - 1.0, 2.0 * (TAU * z).sin() - 0.4]
            }
        }
        Case::SwissRoll => {
            let t1 = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * z[0]);
            let t2 = 21.0 * z[1];
            vec![t1 * t1.cos(), t2, t1 * t1.sin()]
        }
        Case::Model1 => {
            let (z1, z2, z3) = (z[0], z[1], z[2]);
            vec![
                -2.3 + 1.0 / (0.7 + (0.3 - 2.0 * z1).exp()) + 0.3 * z2 * z2,
                0.9 + 0.8 * z1 - 0.1 * z1.powi(3) + (z2 * z2 + 1.5).ln() - 0.4 * z3 * z3,
                1.8 + 3.5 / (2.0 * z2 * z2 + z2 + 4.0) - 0.2 * z3.exp(),
                1.2 * z1 - 0.1 * z2.powi(3) + 0.05 * z3.powi(4),
                3.0 + 0.5 * (2.5 + z1.exp()).ln() - 0.2 * (z3 + 0.2).exp(),
            ]
        }
        Case::Model2 => {
            let (z1, z2, z3) = (z[0], z[1], z[2]);
            vec![
                5.0 * z3 / (3.7 + (-2.0 * z1 + 0.4 * z2).exp()),
                0.9 - 0.1 * z1 - 0.2 * z1 * (z2 - 0.1) * (z2 - 0.1) + 0.15 * z1 * z3,
                (2.0 + (z1 - z2) * (z1 - z2)).ln() - 0.2 * z1 * (0.2 * z3).exp(),
                1.5 - 0.3 * z1 * z1 + 0.07 * z1 * z2 * z3,
                (3.0 * z1 - 1.2) / (z2 * z2 + 2.0 * z2 + 3.3)
                    + 0.5 * (1.0 + (z1 - 0.1) * (z1 - 0.1) + z2 * z2 * z3 * z3).ln(),
            ]
        }
        Case::Sphere => unreachable!(),
    })
}

/// The true generator wrapped as a [`Generator`]; errors if the case has no
/// latent map.
pub struct TrueGenerator {
    case: Case,
    latent_dim: usize,
}

impl TrueGenerator {
    pub fn new(case: Case) -> Result<Self> {
        let latent_dim = case.latent_dim().ok_or_else(|| {
            Error::InvalidConfig("sphere has no latent generator; sample it directly".into())
        })?;
        Ok(TrueGenerator { case, latent_dim })
    }
}

impl Generator for TrueGenerator {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn output_dim(&self) -> usize {
        self.case.ambient_dim()
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        true_generator(self.case, z).expect("dimension checked at construction")
    }
}

/// What to sample and how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub case: Case,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Ambient noise scale `sigma_star >= 0` (0 keeps samples on the support).
    pub sigma_star: f64,
    pub seed: u64,
}

/// Disjoint train/validation/test samples, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub train: Matrix,
    pub val: Matrix,
    pub test: Matrix,
}

/// Draws all three splits with one seeded stream.
///
/// Latents: `Uniform(0,1)` for the 1-D cases, `Uniform(0,1)^2` for the Swiss
/// roll, `N(0, I_3)` for the factor models; sphere rows are normalized 3-D
/// standard normals (exactly uniform on the sphere). Ambient noise
/// `N(0, sigma_star^2 I)` is added when `sigma_star > 0`.
pub fn sample(spec: &SyntheticSpec) -> Result<SampleSet> {
    if spec.sigma_star < 0.0 {
        return Err(Error::OutOfDomain {
            value: spec.sigma_star,
            domain: "sigma_star >= 0",
        });
    }
    let mut rng = crate::rng::seeded(spec.seed);
    let total = spec.n_train + spec.n_val + spec.n_test;
    let d_out = spec.case.ambient_dim();
    let mut data = Matrix::zeros(total, d_out);

    for i in 0..total {
        let x = draw_one(spec.case, &mut rng);
        data.row_mut(i).copy_from_slice(&x);
    }
    if spec.sigma_star > 0.0 {
        for v in data.data_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += spec.sigma_star * e;
        }
    }

    let take = |lo: usize, hi: usize| -> Matrix {
        let mut m = Matrix::zeros(hi - lo, d_out);
        for i in lo..hi {
            m.row_mut(i - lo).copy_from_slice(data.row(i));
        }
        m
    };
    Ok(SampleSet {
        train: take(0, spec.n_train),
        val: take(spec.n_train, spec.n_train + spec.n_val),
        test: take(spec.n_train + spec.n_val, total),
    })
}

fn draw_one(case: Case, rng: &mut Rng) -> Vec<f64> {
    match case {
        Case::Case1 | Case::Case2 | Case::Case3 => {
            let z: f64 = rng.gen();
            true_generator(case, &[z]).unwrap()
        }
        Case::SwissRoll => {
            let z = [rng.gen::<f64>(), rng.gen::<f64>()];
            true_generator(case, &z).unwrap()
        }
        Case::Sphere => loop {
            let v: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        },
        Case::Model1 | Case::Model2 => {
            let z: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            true_generator(case, &z).unwrap()
        }
    }
}

/// Writes a data matrix as CSV with header `x1,...,xD`; floats carry 17
/// significant digits so files round-trip exactly.
pub fn write_data_csv(path: &Path, data: &Matrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (1..=data.cols()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.rows() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_data_csv(path: &Path) -> Result<Matrix> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            cols = line.split(',').count();
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if row.len() != cols {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected {cols} columns, got {}", row.len()),
            });
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_generator_reference_points() {
        let v = true_generator(Case::Case1, &[0.5]).unwrap();
        assert!((v[0]).abs() < 1e-15 && (v[1] + 0.9375).abs() < 1e-15);

        let v = true_generator(Case::Case2, &[0.25]).unwrap();
        assert!(v[0].abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);

        let v = true_generator(Case::Case3, &[0.75]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] + 1.6).abs() < 1e-14);

        let v = true_generator(Case::SwissRoll, &[0.0, 0.0]).unwrap();
        assert!(v[0].abs() < 1e-14);
        assert_eq!(v[1], 0.0);
        assert!((v[2] + 4.712389).abs() < 1e-6);

        let v = true_generator(Case::Model1, &[0.0, 0.0, 0.0]).unwrap();
        assert!((v[0] - (-2.3 + 1.0 / (0.7 + (0.3f64).exp()))).abs() < 1e-15);
        assert!((v[0] + 1.8121615).abs() < 1e-6, "got {}", v[0]);

        let v = true_generator(Case::Model2, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn true_generator_checks_dimensions() {
        assert!(true_generator(Case::Case1, &[0.1, 0.2]).is_err());
        assert!(true_generator(Case::SwissRoll, &[0.1]).is_err());
        assert!(true_generator(Case::Sphere, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn case3_boundary_uses_lower_branch() {
        let v = true_generator(Case::Case3, &[0.5]).unwrap();
        // Lower branch at z = 0.5: (2cos(pi) - 1, 2sin(pi) - 0.4).
        assert!((v[0] + 3.0).abs() < 1e-14);
        assert!((v[1] + 0.4).abs() < 1e-14);
    }

    #[test]
    fn circle_rows_have_exact_radius() {
        let spec = SyntheticSpec {
            case: Case::Case2,
            n_train: 200,
            n_val: 0,
            n_test: 0,
            sigma_star: 0.0,
            seed: 3,
        };
        let s = sample(&spec).unwrap();
        for i in 0..s.train.rows() {
            let r: f64 = s.train.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 2.0).abs() <= 1.8e-15, "radius {r}");
        }
    }

    #[test]
    fn sphere_rows_have_unit_radius() {
        let spec = SyntheticSpec {
            case: Case::Sphere,
            n_train: 200,
            n_val: 0,
            n_test: 0,
            sigma_star: 0.0,
            seed: 4,
        };
        let s = sample(&spec).unwrap();
        for i in 0..s.train.rows() {
            let r: f64 = s.train.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() <= 1e-15, "radius {r}");
        }
    }

    #[test]
    fn case1_first_coordinate_is_centered() {
        let n = 10_000;
        let spec = SyntheticSpec {
            case: Case::Case1,
            n_train: n,
            n_val: 0,
            n_test: 0,
            sigma_star: 0.0,
            seed: 5,
        };
        let s = sample(&spec).unwrap();
        let mean: f64 = (0..n).map(|i| s.train.get(i, 0)).sum::<f64>() / n as f64;
        // 6(U - 0.5) has sd sqrt(3); 4 standard errors.
        let band = 4.0 * 3.0f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < band, "mean {mean}");
    }

    #[test]
    fn case3_components_are_separated() {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for i in 0..400 {
            let z = (i as f64 + 0.5) / 400.0;
            let x = true_generator(Case::Case3, &[z]).unwrap();
            if z > 0.5 {
                upper.push(x);
            } else {
                lower.push(x);
            }
        }
        let mut min_d2 = f64::INFINITY;
        for a in &upper {
            for b in &lower {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                min_d2 = min_d2.min(d2);
            }
        }
        assert!(min_d2.sqrt() > 0.1, "min distance {}", min_d2.sqrt());
    }

    #[test]
    fn splits_are_exact_and_reproducible() {
        let spec = SyntheticSpec {
            case: Case::Model1,
            n_train: 50,
            n_val: 20,
            n_test: 30,
            sigma_star: 0.1,
            seed: 11,
        };
        let a = sample(&spec).unwrap();
        let b = sample(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.rows(), 50);
        assert_eq!(a.val.rows(), 20);
        assert_eq!(a.test.rows(), 30);
        assert_ne!(a.train.row(0), a.val.row(0));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let spec = SyntheticSpec {
            case: Case::SwissRoll,
            n_train: 25,
            n_val: 0,
            n_test: 0,
            sigma_star: 0.05,
            seed: 9,
        };
        let s = sample(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_data_csv(&path, &s.train).unwrap();
        let back = read_data_csv(&path).unwrap();
        assert_eq!(s.train, back);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,x3\n"));
    }
}
