//! Dense f64 matrix arithmetic, reverse-mode autodiff over a recorded tape,
//! numerically stable reductions, and the Adam optimizer.
//!
//! The tape ([`Tape`]) records matrix-valued primitives during the forward
//! pass (define-by-run, one tape per training step) and replays them in
//! reverse. Gradients are exact for the recorded program, which unit and
//! acceptance tests verify against central finite differences.

mod adam;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamState};
pub use matrix::{affine, cholesky_solve, Matrix};
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};

/// Activation kinds for the shifted activations `rho_v(z) = act(z - v)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    pub fn slope(self) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::LeakyRelu(s) => s,
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Activation::LeakyRelu(s) = self {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "leaky_relu slope must lie in (0,1), got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Componentwise shifted activation: `act(x_i - shift_i)`.
///
/// ReLU keeps the positive part; the leaky variant scales the negative part
/// by its slope.
pub fn activation(kind: Activation, x: &[f64], shift: &[f64]) -> Result<Vec<f64>> {
    kind.validate()?;
    if x.len() != shift.len() {
        return Err(Error::shape("activation", x.len(), shift.len()));
    }
    let slope = kind.slope();
    Ok(x.iter()
        .zip(shift)
        .map(|(&xi, &vi)| {
            let t = xi - vi;
            if t > 0.0 {
                t
            } else {
                slope * t
            }
        })
        .collect())
}

/// `log(sum_i exp(v_i))`, computed by subtracting the maximum.
///
/// Entries may be `-inf` (they contribute nothing) but not all of them;
/// `NaN` or `+inf` entries are rejected.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("logsumexp"));
    }
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite {
                what: "logsumexp input".into(),
                index: i,
                value: v,
            });
        }
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::OutOfDomain {
            value: f64::NEG_INFINITY,
            domain: "logsumexp needs at least one entry above -inf",
        });
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Monotonic integer key so ulp distance works across the sign boundary.
    fn key(x: f64) -> i64 {
        let b = x.to_bits() as i64;
        if b >= 0 {
            b
        } else {
            i64::MIN - b
        }
    }

    fn ulp_diff(a: f64, b: f64) -> u64 {
        key(a).wrapping_sub(key(b)).unsigned_abs()
    }

    #[test]
    fn logsumexp_two_zeros_is_log_two() {
        let v = logsumexp(&[0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_singleton_is_identity() {
        assert_eq!(logsumexp(&[-3.25]).unwrap(), -3.25);
        assert_eq!(logsumexp(&[1000.0]).unwrap(), 1000.0);
    }

    #[test]
    fn logsumexp_large_values_do_not_overflow() {
        let v = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((v - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_rejects_empty_and_all_neg_inf() {
        assert!(logsumexp(&[]).is_err());
        assert!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn logsumexp_allows_some_neg_inf() {
        let v = logsumexp(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn activation_examples() {
        let r = activation(Activation::Relu, &[-1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 2.0]);
        let r = activation(Activation::Relu, &[3.0], &[1.0]).unwrap();
        assert_eq!(r, vec![2.0]);
        let r = activation(Activation::LeakyRelu(0.01), &[-1.0], &[0.0]).unwrap();
        assert_eq!(r, vec![-0.01]);
    }

    proptest! {
        // Shift invariance: logsumexp(v + c) = logsumexp(v) + c up to 2 ulp
        // at the working scale. Dyadic inputs keep the entrywise shifts
        // exact, so the comparison probes the reduction itself rather than
        // input rounding; the scale factor accounts for the final additions,
        // whose rounding is relative to max(|lse|, |c|) rather than to a
        // possibly cancelled result.
        #[test]
        fn logsumexp_shift_invariance(
            num in proptest::collection::vec(-3200i32..3200, 1..12),
            cnum in -6400i32..6400,
        ) {
            let v: Vec<f64> = num.iter().map(|&k| f64::from(k) / 64.0).collect();
            let c = f64::from(cnum) / 64.0;
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = logsumexp(&shifted).unwrap();
            let base = logsumexp(&v).unwrap();
            let b = base + c;
            let scale = a.abs().max(b.abs()).max(base.abs()).max(c.abs()).max(1.0);
            prop_assert!(
                (a - b).abs() <= 2.0 * f64::EPSILON * scale,
                "a={a}, b={b}, scale={scale}"
            );
            // Without cancellation the agreement is ulp-tight.
            if b.abs() > 0.5 * scale {
                prop_assert!(ulp_diff(a, b) <= 2, "a={a}, b={b}, ulp={}", ulp_diff(a, b));
            }
        }
    }
}
