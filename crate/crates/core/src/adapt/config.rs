use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Applied to the gradients of every update after backpropagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GradTransform {
    /// Rescales the joint gradient so its L2 norm is at most `max_norm`.
    ClipNorm { max_norm: f64 },
    Identity,
}

impl GradTransform {
    pub fn apply(&self, grads: &mut [(crate::model::Slot, Vec<f64>)]) {
        if let GradTransform::ClipNorm { max_norm } = *self {
            let norm = grads
                .iter()
                .flat_map(|(_, g)| g.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                for (_, g) in grads.iter_mut() {
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// Branch (phase 1) learning rate.
    pub beta: f64,
    /// Trunk learning rate per layer, non-decreasing with depth.
    pub alphas: Vec<f64>,
    /// Trunk perturbation penalty per layer.
    pub gammas: Vec<f64>,
    /// Phase-1 steps during training.
    pub inner_steps: usize,
    /// Phase-1 steps during evaluation; `None` reuses `inner_steps`.
    pub eval_inner_steps: Option<usize>,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub optimizer: OptimizerKind,
    pub grad_transform: GradTransform,
    /// Adapt trunk perturbations together with the branch in phase 1.
    pub joint_phase1: bool,
    /// When false, phase 1 leaves the model untouched.
    pub phase1_enabled: bool,
    /// Learning rate of the static baseline's supervised step.
    pub static_lr: f64,
    pub lora_rank: usize,
    pub lora_scale: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            beta: 1e-3,
            alphas: vec![3e-5, 3e-5],
            gammas: vec![1e-4, 1e-4],
            inner_steps: 10,
            eval_inner_steps: None,
            epochs: 50,
            batches_per_epoch: 100,
            optimizer: OptimizerKind::Adam,
            grad_transform: GradTransform::ClipNorm { max_norm: 1.0 },
            joint_phase1: false,
            phase1_enabled: true,
            static_lr: 1e-3,
            lora_rank: 4,
            lora_scale: 1.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::config("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("alphas", "need one learning rate per trunk layer"));
        }
        if !(self.alphas[0] > 0.0) {
            return Err(Error::config("alphas", format!("alpha_0 must be positive, got {}", self.alphas[0])));
        }
        if let Some(w) = self.alphas.windows(2).find(|w| !(w[0] <= w[1])) {
            return Err(Error::config(
                "alphas",
                format!("must be non-decreasing with depth, got {} then {}", w[0], w[1]),
            ));
        }
        let last = *self.alphas.last().unwrap();
        if !(last < self.beta) {
            return Err(Error::config(
                "alphas",
                format!("trunk rate {last} must stay below the branch rate beta = {}", self.beta),
            ));
        }
        if self.gammas.len() != self.alphas.len() {
            return Err(Error::config(
                "gammas",
                format!("{} penalties for {} trunk rates", self.gammas.len(), self.alphas.len()),
            ));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::config("gammas", format!("must be >= 0, got {g}")));
        }
        for (field, v) in [
            ("inner_steps", self.inner_steps),
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.eval_inner_steps == Some(0) {
            return Err(Error::config("eval_inner_steps", "must be at least 1"));
        }
        if !(self.static_lr > 0.0) {
            return Err(Error::config("static_lr", "must be positive"));
        }
        if let GradTransform::ClipNorm { max_norm } = self.grad_transform {
            if !(max_norm > 0.0) {
                return Err(Error::config("grad_transform.max_norm", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn eval_steps(&self) -> usize {
        self.eval_inner_steps.unwrap_or(self.inner_steps)
    }

    pub fn train_episodes(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AdaptConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Slot;

    #[test]
    fn defaults_validate() {
        AdaptConfig::default().validate().unwrap();
    }

    #[test]
    fn rate_ordering_is_enforced() {
        let c = AdaptConfig {
            alphas: vec![1e-4, 5e-5],
            ..AdaptConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config { .. })));

        let c = AdaptConfig {
            alphas: vec![1e-4, 2e-3],
            ..AdaptConfig::default()
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("alphas"), "{err}");

        let c = AdaptConfig {
            alphas: vec![0.0, 1e-5],
            ..AdaptConfig::default()
        };
        assert!(c.validate().is_err());

        let c = AdaptConfig {
            inner_steps: 0,
            ..AdaptConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_load_rejects_bad_rates() {
        let err = AdaptConfig::from_json(r#"{"beta": 1e-5, "alphas": [3e-5, 3e-5]}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let ok = AdaptConfig::from_json(r#"{"inner_steps": 30}"#).unwrap();
        assert_eq!(ok.inner_steps, 30);
        assert_eq!(ok.beta, 1e-3);
    }

    #[test]
    fn clip_norm_rescales_jointly() {
        let mut g = vec![(Slot::Psi(2), vec![3.0, 0.0]), (Slot::Psi(3), vec![4.0])];
        GradTransform::ClipNorm { max_norm: 1.0 }.apply(&mut g);
        assert!((g[0].1[0] - 0.6).abs() < 1e-15);
        assert!((g[1].1[0] - 0.8).abs() < 1e-15);

        let mut small = vec![(Slot::Psi(2), vec![0.1])];
        GradTransform::ClipNorm { max_norm: 1.0 }.apply(&mut small);
        assert_eq!(small[0].1, vec![0.1]);
    }
}
