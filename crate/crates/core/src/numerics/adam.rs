//! Adam with bias correction.

use crate::error::{Error, Result};

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update. Deterministic: identical `(state, params, grad)` inputs
/// produce bit-identical outputs.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("state length {}", state.m.len()),
            format!("params {} / grad {}", params.len(), grad.len()),
        ));
    }
    if state.lr <= 0.0 {
        return Err(Error::InvalidConfig(format!("adam lr must be > 0, got {}", state.lr)));
    }
    if let Some((i, &g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient".into(),
            index: i,
            value: g,
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut st = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut st, &mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // Hand evaluation at t=1: m_hat = g, v_hat = g^2, so the update is
        // -lr * g / (|g| + eps) = -lr * sign(g) up to eps.
        let mut st = AdamState::new(1, 1e-3);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[2.0]).unwrap();
        let expected = -1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 1e-3).abs() < 1e-8);
    }

    #[test]
    fn opposite_gradients_nearly_cancel() {
        let mut st = AdamState::new(1, 1e-3);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[3.0]).unwrap();
        adam_step(&mut st, &mut p, &[-3.0]).unwrap();
        assert!(p[0].abs() < 1e-3, "total drift {}", p[0]);
    }

    #[test]
    fn rejects_non_finite_gradient_with_index() {
        let mut st = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        let err = adam_step(&mut st, &mut p, &[0.0, f64::NAN]).unwrap_err();
        match err {
            Error::NonFinite { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn update_is_bit_reproducible() {
        let grad = [0.3, -0.7, 1.1];
        let run = || {
            let mut st = AdamState::new(3, 5e-3);
            let mut p = vec![0.1, 0.2, 0.3];
            for _ in 0..50 {
                adam_step(&mut st, &mut p, &grad).unwrap();
            }
            (st, p)
        };
        let (s1, p1) = run();
        let (s2, p2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }
}
