//! Dense `f64` tensors, a reverse-mode tape, and the two optimizers used for
//! adaptation.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, sgd_step, AdamState};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub(crate) use tensor::matmul_acc;

/// Central-difference gradient estimate of `f` at `theta`.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, or 0 when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() <= 1e-6);

        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5);
        assert!(g.iter().all(|v| *v == 0.0));

        let g = finite_diff_grad(|t| t[0].sin(), &[0.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-9);
    }
}
