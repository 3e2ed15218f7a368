use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(params: usize, grads: usize) -> Result<()> {
    if params != grads {
        return Err(Error::dim(format!(
            "{params} parameters but {grads} gradient entries"
        )));
    }
    Ok(())
}

/// `params -= lr * grads`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_lengths(params.len(), grads.len())?;
    if !(lr > 0.0) {
        return Err(Error::config("lr", format!("must be positive, got {lr}")));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// First/second moment estimates for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyper(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    check_lengths(params.len(), grads.len())?;
    if state.len() != params.len() {
        return Err(Error::dim(format!(
            "optimizer state tracks {} entries, parameters have {}",
            state.len(),
            params.len()
        )));
    }
    if !(lr > 0.0) {
        return Err(Error::config("lr", format!("must be positive, got {lr}")));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = if c1 > 0.0 { *m / c1 } else { *m };
        let v_hat = if c2 > 0.0 { *v / c2 } else { *v };
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.5).unwrap();
        assert_eq!(p, vec![0.0]);

        let mut p = vec![1.0, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.3).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        // gradient of theta^2 / 2 is theta
        let mut p = vec![1.0];
        let g = p.clone();
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);

        assert!(matches!(
            sgd_step(&mut p, &[1.0, 2.0], 0.1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn adam_first_step_is_minus_lr_sign() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-10, "{}", p[0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn adam_zero_grad_fresh_state_is_noop() {
        let mut p = vec![0.25, -4.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
        assert_eq!(p, vec![0.25, -4.0]);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        for _ in 0..200 {
            let g = p.clone();
            adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        }
        assert!(p[0].abs() < 1e-2, "{}", p[0]);
        assert!(s.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn adam_rejects_mismatched_state() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(1);
        assert!(matches!(
            adam_step(&mut p, &[1.0, 1.0], &mut s, 1e-3),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn adam_without_moments_is_sign_descent() {
        let mut p = vec![0.0, 0.0, 0.0];
        let mut s = AdamState::with_hyper(3, 0.0, 0.0, 0.0);
        adam_step(&mut p, &[3.0, -0.5, 1e-4], &mut s, 0.1).unwrap();
        for (got, want) in p.iter().zip([-0.1, 0.1, -0.1]) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
