use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::csv_string;
use super::quadratic::{DriftBound, DriftingQuadratic, OptimumPath};
use crate::error::{Error, Result};
use crate::synthgen::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub horizon: usize,
    pub alpha: f64,
    /// Incurred loss `l_t(theta_t)`, `t = 0..T`.
    pub losses: Vec<f64>,
    /// Per-step optimal loss `l_t(theta*_t)`.
    pub optimal_losses: Vec<f64>,
    pub regret: f64,
    /// Path length of the per-step optima.
    pub cv: f64,
    /// `R_t / t` for `t = 1..=T`.
    pub avg_regret_curve: Vec<f64>,
    /// Largest gradient norm met along the run.
    pub max_grad_norm: f64,
    /// Largest distance between the iterate and the current optimum.
    pub diameter: f64,
}

impl RegretReport {
    /// Regret recomputed from the stored per-step losses.
    pub fn regret_from_losses(&self) -> f64 {
        self.losses
            .iter()
            .zip(&self.optimal_losses)
            .map(|(a, b)| a - b)
            .sum()
    }

    pub fn average_regret(&self) -> f64 {
        self.regret / self.horizon as f64
    }

    pub fn trace_csv(&self) -> Result<String> {
        let mut cum = 0.0;
        csv_string(
            &["t", "loss", "optimal_loss", "cumulative_regret", "average_regret"],
            (0..self.horizon).map(|t| {
                cum += self.losses[t] - self.optimal_losses[t];
                vec![
                    t.to_string(),
                    self.losses[t].to_string(),
                    self.optimal_losses[t].to_string(),
                    cum.to_string(),
                    self.avg_regret_curve[t].to_string(),
                ]
            }),
        )
    }
}

/// Gradient descent on `l_t(theta) = 1/2 (theta - theta*_t)^T H (theta - theta*_t)`
/// along `q.path`: each step pays `l_t(theta_t)`, then moves with the exact
/// gradient. The per-step optimum is `theta*_t` with loss zero.
pub fn dynamic_regret_run(
    q: &DriftingQuadratic,
    theta0: &[f64],
    horizon: usize,
    alpha: f64,
) -> Result<RegretReport> {
    if horizon < 2 {
        return Err(Error::config("horizon", format!("need T >= 2, got {horizon}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::config("alpha", format!("must be positive, got {alpha}")));
    }
    if theta0.len() != q.dim() {
        return Err(Error::dim(format!("theta0 has {} entries, dimension is {}", theta0.len(), q.dim())));
    }
    let optima = q.path.points(q.dim(), horizon)?;
    let mut theta = DVector::from_column_slice(theta0);
    let mut losses = Vec::with_capacity(horizon);
    let mut curve = Vec::with_capacity(horizon);
    let (mut cum, mut g_max, mut d_max) = (0.0, 0.0f64, 0.0f64);
    for star in &optima {
        let e = &theta - star;
        let g = &q.h * &e;
        let loss = 0.5 * e.dot(&g);
        cum += loss;
        losses.push(loss);
        curve.push(cum / losses.len() as f64);
        g_max = g_max.max(g.norm());
        d_max = d_max.max(e.norm());
        theta -= g * alpha;
    }
    let cv = optima.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    Ok(RegretReport {
        horizon,
        alpha,
        optimal_losses: vec![0.0; horizon],
        regret: cum,
        losses,
        cv,
        avg_regret_curve: curve,
        max_grad_norm: g_max,
        diameter: d_max,
    })
}

/// Frozen constants of the regret bound check. They validate the growth
/// order of the bound, not a specific constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: f64,
    pub c0: f64,
    pub calibration_seed: u64,
    pub note: String,
}

const FIXTURE: &str = include_str!("../../fixtures/regret_bound_constants.json");

impl BoundConstants {
    /// The constants committed with the crate.
    pub fn fixture() -> Self {
        serde_json::from_str(FIXTURE).expect("bundled regret constants parse")
    }
}

fn bound_base(report: &RegretReport, alpha: &dyn Fn(usize) -> f64, g: f64) -> f64 {
    let rates: Vec<f64> = (0..report.horizon).map(alpha).collect();
    let sum: f64 = rates.iter().sum();
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    sum * g * g / 2.0 + report.diameter * report.cv / min
}

/// `R_T <= C (sum_t a(t) G^2 / 2 + D CV_T / min_t a(t)) + C0` with the
/// committed constants.
pub fn regret_bound_check(report: &RegretReport, alpha: &dyn Fn(usize) -> f64, g: f64) -> bool {
    regret_bound_check_with(report, alpha, g, &BoundConstants::fixture())
}

pub fn regret_bound_check_with(
    report: &RegretReport,
    alpha: &dyn Fn(usize) -> f64,
    g: f64,
    k: &BoundConstants,
) -> bool {
    report.regret <= k.c * bound_base(report, alpha, g) + k.c0
}

/// Horizons and instance used to fit the frozen constants.
pub const CALIBRATION_HORIZONS: [usize; 3] = [256, 1024, 4096];

pub(crate) fn calibration_instance(seed: u64) -> Result<DriftingQuadratic> {
    let mut rng = rng_from_seed(seed);
    DriftingQuadratic::random(
        5,
        (0.5, 2.0),
        DriftBound::NONE,
        OptimumPath::Harmonic { c: 1.0, seed: seed ^ 0x9e37_79b9 },
        &mut rng,
    )
}

/// Fits `C` as twice the largest ratio `R_T / base_T` over the calibration
/// horizons (step size `1/sqrt(T)`), and `C0` as the smallest offset that
/// keeps every calibration run inside the bound.
pub fn calibrate_bound_constants(seed: u64) -> Result<BoundConstants> {
    let q = calibration_instance(seed)?;
    let theta0 = vec![0.0; q.dim()];
    let mut pts = Vec::new();
    for t in CALIBRATION_HORIZONS {
        let a = 1.0 / (t as f64).sqrt();
        let r = dynamic_regret_run(&q, &theta0, t, a)?;
        let base = bound_base(&r, &|_| a, r.max_grad_norm);
        pts.push((r.regret, base));
    }
    let c = 2.0 * pts.iter().map(|(r, b)| r / b).fold(0.0, f64::max);
    let c0 = pts.iter().map(|(r, b)| r - c * b).fold(0.0, f64::max);
    Ok(BoundConstants {
        c,
        c0,
        calibration_seed: seed,
        note: "fitted on one calibration instance; checks the growth order of the bound, not a sharp constant"
            .into(),
    })
}
