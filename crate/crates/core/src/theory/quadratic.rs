use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{csv_string, VIOLATION_TOLERANCE};
use crate::error::{Error, Result};
use crate::synthgen::{rng_from_seed, Rng64};

/// `delta_t = delta0 * rho^t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftBound {
    pub delta0: f64,
    pub rho: f64,
}

impl DriftBound {
    pub const NONE: DriftBound = DriftBound { delta0: 0.0, rho: 0.0 };

    pub fn at(&self, t: usize) -> f64 {
        if self.delta0 == 0.0 {
            return 0.0;
        }
        self.delta0 * self.rho.powi(t as i32)
    }
}

/// Sequence of per-step optima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimumPath {
    Fixed { point: Vec<f64> },
    /// `c * (-1)^t` on the first axis.
    Alternating { c: f64 },
    /// Starts at the origin; step `t >= 1` moves by `c / t` along a fresh
    /// random unit vector, so the path length grows like `c * ln T`.
    Harmonic { c: f64, seed: u64 },
}

impl OptimumPath {
    /// First `count` optima in dimension `dim`. Prefixes agree across counts.
    pub fn points(&self, dim: usize, count: usize) -> Result<Vec<DVector<f64>>> {
        match self {
            OptimumPath::Fixed { point } => {
                if point.len() != dim {
                    return Err(Error::dim(format!("optimum has {} entries, dimension is {dim}", point.len())));
                }
                Ok(vec![DVector::from_column_slice(point); count])
            }
            OptimumPath::Alternating { c } => Ok((0..count)
                .map(|t| {
                    let mut v = DVector::zeros(dim);
                    v[0] = if t % 2 == 0 { *c } else { -*c };
                    v
                })
                .collect()),
            OptimumPath::Harmonic { c, seed } => {
                let mut rng = rng_from_seed(*seed);
                let mut cur = DVector::zeros(dim);
                let mut out = Vec::with_capacity(count);
                for t in 0..count {
                    if t > 0 {
                        cur += unit_vector(dim, &mut rng) * (*c / t as f64);
                    }
                    out.push(cur.clone());
                }
                Ok(out)
            }
        }
    }
}

pub(crate) fn unit_vector(dim: usize, rng: &mut Rng64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// `F(theta) = 1/2 (theta - c)^T H (theta - c)` with an additive gradient
/// drift of norm exactly `delta_t` along a fixed unit direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftingQuadratic {
    pub h: DMatrix<f64>,
    /// Smallest eigenvalue of `h`.
    pub mu: f64,
    /// Largest eigenvalue of `h`.
    pub l: f64,
    pub center: DVector<f64>,
    pub drift: DriftBound,
    pub drift_dir: DVector<f64>,
    pub path: OptimumPath,
}

impl DriftingQuadratic {
    pub fn new(
        h: DMatrix<f64>,
        center: DVector<f64>,
        drift: DriftBound,
        drift_dir: DVector<f64>,
        path: OptimumPath,
    ) -> Result<Self> {
        let d = h.nrows();
        if d == 0 || h.ncols() != d {
            return Err(Error::dim(format!("curvature must be square, got {}x{}", h.nrows(), h.ncols())));
        }
        if center.len() != d || drift_dir.len() != d {
            return Err(Error::dim(format!(
                "center ({}) and drift direction ({}) must have dimension {d}",
                center.len(),
                drift_dir.len()
            )));
        }
        if (&h - h.transpose()).amax() > 1e-12 * h.amax().max(1.0) {
            return Err(Error::config("curvature", "matrix is not symmetric"));
        }
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        let mu = eig.min();
        let l = eig.max();
        if !(mu > 0.0) {
            return Err(Error::config("curvature", format!("not positive definite (smallest eigenvalue {mu})")));
        }
        if !(drift.delta0 >= 0.0) || !(0.0..1.0).contains(&drift.rho) && drift.delta0 > 0.0 {
            return Err(Error::config("drift", "need delta0 >= 0 and 0 <= rho < 1 for a summable drift"));
        }
        let n = drift_dir.norm();
        if drift.delta0 > 0.0 && !(n > 0.0) {
            return Err(Error::config("drift_dir", "must be non-zero"));
        }
        let drift_dir = if n > 0.0 { drift_dir / n } else { drift_dir };
        Ok(DriftingQuadratic {
            h,
            mu,
            l,
            center,
            drift,
            drift_dir,
            path,
        })
    }

    /// One-dimensional objective `h/2 (theta - center)^2`.
    pub fn scalar(h: f64, center: f64, drift: DriftBound, path: OptimumPath) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, center),
            drift,
            DVector::from_element(1, 1.0),
            path,
        )
    }

    /// Random instance with eigenvalues drawn from `eig_range`, centre and
    /// drift direction drawn uniformly on the sphere.
    pub fn random(
        dim: usize,
        eig_range: (f64, f64),
        drift: DriftBound,
        path: OptimumPath,
        rng: &mut Rng64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        if !(eig_range.0 > 0.0 && eig_range.0 <= eig_range.1) {
            return Err(Error::config("eig_range", "need 0 < lo <= hi"));
        }
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let lambdas = DVector::from_fn(dim, |_, _| {
            if eig_range.0 == eig_range.1 {
                eig_range.0
            } else {
                rng.gen_range(eig_range.0..eig_range.1)
            }
        });
        let h = &q * DMatrix::from_diagonal(&lambdas) * q.transpose();
        let h = (&h + h.transpose()) * 0.5;
        let center = unit_vector(dim, rng);
        let dir = unit_vector(dim, rng);
        Self::new(h, center, drift, dir, path)
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `F(theta) - F*`.
    pub fn gap(&self, theta: &DVector<f64>) -> f64 {
        let e = theta - &self.center;
        0.5 * e.dot(&(&self.h * &e))
    }

    pub fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.h * (theta - &self.center)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLProbeReport {
    pub steps: usize,
    pub mu: f64,
    pub l: f64,
    /// `F(theta_t) - F*` for `t = 0..=steps`.
    pub gaps: Vec<f64>,
    /// Right-hand side of the contraction bound at each step.
    pub bound: Vec<f64>,
    /// `bound - (F(theta_{t+1}) - F*)`.
    pub slack: Vec<f64>,
    pub violations: usize,
    pub min_slack: f64,
}

impl PLProbeReport {
    pub fn trace_csv(&self) -> Result<String> {
        csv_string(
            &["step", "gap", "next_gap", "bound", "slack"],
            (0..self.steps).map(|t| {
                vec![
                    t.to_string(),
                    self.gaps[t].to_string(),
                    self.gaps[t + 1].to_string(),
                    self.bound[t].to_string(),
                    self.slack[t].to_string(),
                ]
            }),
        )
    }
}

/// Runs `theta_{t+1} = theta_t - alpha(t) (grad F(theta_t) + delta_t u)` and
/// checks, each step,
/// `F_{t+1} - F* <= (1 - mu a)(F_t - F*) + a delta_t + (L/2) a^2 delta_t^2`.
pub fn pl_contraction_probe(
    q: &DriftingQuadratic,
    alpha: &dyn Fn(usize) -> f64,
    steps: usize,
    theta0: &[f64],
) -> Result<PLProbeReport> {
    if theta0.len() != q.dim() {
        return Err(Error::dim(format!("theta0 has {} entries, dimension is {}", theta0.len(), q.dim())));
    }
    let mut theta = DVector::from_column_slice(theta0);
    let mut gaps = vec![q.gap(&theta)];
    let mut bound = Vec::with_capacity(steps);
    let mut slack = Vec::with_capacity(steps);
    for t in 0..steps {
        let a = alpha(t);
        if !(a > 0.0) || a * q.l >= 1.0 {
            return Err(Error::config(
                "alpha",
                format!("step {t}: step size {a} must lie in (0, 1/L) with L = {}", q.l),
            ));
        }
        let delta = q.drift.at(t);
        let g = q.grad(&theta) + &q.drift_dir * delta;
        theta -= g * a;
        let f_now = gaps[t];
        let f_next = q.gap(&theta);
        let rhs = (1.0 - q.mu * a) * f_now + a * delta + 0.5 * q.l * a * a * delta * delta;
        bound.push(rhs);
        slack.push(rhs - f_next);
        gaps.push(f_next);
    }
    let violations = slack.iter().filter(|s| **s < VIOLATION_TOLERANCE).count();
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PLProbeReport {
        steps,
        mu: q.mu,
        l: q.l,
        gaps,
        bound,
        slack,
        violations,
        min_slack,
    })
}
