//! Batch drivers behind the `theory` subcommand.

use serde::{Deserialize, Serialize};

use super::expressivity::{conflicting_linear_tasks, expressivity_probe, identical_linear_tasks, ExpressivityReport};
use super::quadratic::{pl_contraction_probe, unit_vector, DriftBound, DriftingQuadratic, OptimumPath, PLProbeReport};
use super::regret::{dynamic_regret_run, regret_bound_check, BoundConstants, RegretReport};
use crate::error::{Error, Result};
use crate::synthgen::{derived_rng, rng_from_seed};
use rand::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlSuiteConfig {
    pub instances: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub eig_range: (f64, f64),
    pub delta0: f64,
    pub rho: f64,
    /// Step size as a fraction of `1/L`.
    pub alpha_fraction: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for PlSuiteConfig {
    fn default() -> Self {
        PlSuiteConfig {
            instances: 20,
            min_dim: 1,
            max_dim: 10,
            eig_range: (0.2, 5.0),
            delta0: 0.1,
            rho: 0.9,
            alpha_fraction: 0.5,
            steps: 500,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlInstanceSummary {
    pub dim: usize,
    pub mu: f64,
    pub l: f64,
    pub violations: usize,
    pub min_slack: f64,
    pub final_gap_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlSuiteReport {
    pub config: PlSuiteConfig,
    pub instances: Vec<PlInstanceSummary>,
    pub total_violations: usize,
    /// `(F_T - F*) / (F_0 - F*)` on the drift-free `mu = L = 1`, `alpha = 0.1` instance.
    pub zero_drift_ratio: f64,
    pub zero_drift_step_ratios_max: f64,
}

pub fn run_pl_suite(cfg: &PlSuiteConfig) -> Result<(PlSuiteReport, Vec<PLProbeReport>)> {
    if cfg.instances == 0 || cfg.min_dim == 0 || cfg.min_dim > cfg.max_dim {
        return Err(Error::config("instances/min_dim/max_dim", "need instances >= 1 and 1 <= min_dim <= max_dim"));
    }
    if !(cfg.alpha_fraction > 0.0 && cfg.alpha_fraction < 1.0) {
        return Err(Error::config("alpha_fraction", "must lie in (0, 1)"));
    }
    let drift = DriftBound { delta0: cfg.delta0, rho: cfg.rho };
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for i in 0..cfg.instances {
        let mut rng = derived_rng(cfg.seed, i as u64);
        let dim = rng.gen_range(cfg.min_dim..=cfg.max_dim);
        let q = DriftingQuadratic::random(dim, cfg.eig_range, drift, OptimumPath::Fixed { point: vec![0.0; dim] }, &mut rng)?;
        let theta0: Vec<f64> = (unit_vector(dim, &mut rng) * 3.0).iter().copied().collect();
        let a = cfg.alpha_fraction / q.l;
        let r = pl_contraction_probe(&q, &|_| a, cfg.steps, &theta0)?;
        summaries.push(PlInstanceSummary {
            dim,
            mu: r.mu,
            l: r.l,
            violations: r.violations,
            min_slack: r.min_slack,
            final_gap_ratio: r.gaps[cfg.steps] / r.gaps[0],
        });
        traces.push(r);
    }
    let q1 = DriftingQuadratic::scalar(1.0, 0.0, DriftBound::NONE, OptimumPath::Fixed { point: vec![0.0] })?;
    let z = pl_contraction_probe(&q1, &|_| 0.1, cfg.steps, &[1.0])?;
    let step_max = z.gaps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    Ok((
        PlSuiteReport {
            config: cfg.clone(),
            total_violations: summaries.iter().map(|s| s.violations).sum(),
            instances: summaries,
            zero_drift_ratio: z.gaps[cfg.steps] / z.gaps[0],
            zero_drift_step_ratios_max: step_max,
        },
        traces,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegretSuiteConfig {
    pub horizons: Vec<usize>,
    pub dim: usize,
    pub eig_range: (f64, f64),
    /// Scale `c` of the harmonic optimum path.
    pub path_scale: f64,
    pub batch: usize,
    pub batch_horizon: usize,
    pub seed: u64,
}

impl Default for RegretSuiteConfig {
    fn default() -> Self {
        RegretSuiteConfig {
            horizons: vec![256, 1024, 4096],
            dim: 5,
            eig_range: (0.5, 2.0),
            path_scale: 1.0,
            batch: 10,
            batch_horizon: 1024,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretSuiteReport {
    pub config: RegretSuiteConfig,
    pub constants: BoundConstants,
    pub average_regret: Vec<(usize, f64)>,
    pub cv: Vec<(usize, f64)>,
    pub strictly_decreasing: bool,
    pub batch_within_bound: Vec<bool>,
}

fn regret_instance(cfg: &RegretSuiteConfig, stream: u64) -> Result<DriftingQuadratic> {
    let mut rng = derived_rng(cfg.seed, stream);
    let path_seed = rng.gen();
    DriftingQuadratic::random(
        cfg.dim,
        cfg.eig_range,
        DriftBound::NONE,
        OptimumPath::Harmonic { c: cfg.path_scale, seed: path_seed },
        &mut rng,
    )
}

/// Average regret across horizons on one instance, then the bound check on
/// `batch` fresh instances, all at step size `1/sqrt(T)`.
pub fn run_regret_suite(cfg: &RegretSuiteConfig) -> Result<(RegretSuiteReport, Vec<RegretReport>)> {
    if cfg.horizons.is_empty() || cfg.horizons.iter().any(|t| *t < 2) {
        return Err(Error::config("horizons", "need at least one horizon, each >= 2"));
    }
    let q = regret_instance(cfg, 0)?;
    let theta0 = vec![0.0; cfg.dim];
    let mut runs = Vec::new();
    for &t in &cfg.horizons {
        runs.push(dynamic_regret_run(&q, &theta0, t, 1.0 / (t as f64).sqrt())?);
    }
    let strictly_decreasing = runs
        .windows(2)
        .all(|w| w[1].average_regret() < w[0].average_regret());
    let batch_within_bound = (0..cfg.batch)
        .map(|i| {
            let q = regret_instance(cfg, 1 + i as u64)?;
            let a = 1.0 / (cfg.batch_horizon as f64).sqrt();
            let r = dynamic_regret_run(&q, &theta0, cfg.batch_horizon, a)?;
            Ok(regret_bound_check(&r, &|_| a, r.max_grad_norm))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        RegretSuiteReport {
            config: cfg.clone(),
            constants: BoundConstants::fixture(),
            average_regret: runs.iter().map(|r| (r.horizon, r.average_regret())).collect(),
            cv: runs.iter().map(|r| (r.horizon, r.cv)).collect(),
            strictly_decreasing,
            batch_within_bound,
        },
        runs,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpressivitySuiteConfig {
    pub tasks: usize,
    pub budget: usize,
    pub samples: usize,
    pub features: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ExpressivitySuiteConfig {
    fn default() -> Self {
        ExpressivitySuiteConfig {
            tasks: 8,
            budget: 8,
            samples: 32,
            features: 1,
            noise: 0.05,
            seed: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressivitySuiteReport {
    pub config: ExpressivitySuiteConfig,
    pub conflicting: ExpressivityReport,
    pub identical: ExpressivityReport,
}

pub fn run_expressivity_suite(cfg: &ExpressivitySuiteConfig) -> Result<ExpressivitySuiteReport> {
    let mut rng = rng_from_seed(cfg.seed);
    let conflicting = conflicting_linear_tasks(cfg.tasks, cfg.samples, cfg.features, cfg.noise, &mut rng);
    let identical = identical_linear_tasks(cfg.tasks, cfg.samples, cfg.features, cfg.noise, &mut rng);
    Ok(ExpressivitySuiteReport {
        config: cfg.clone(),
        conflicting: expressivity_probe(&conflicting, cfg.budget)?,
        identical: expressivity_probe(&identical, cfg.budget)?,
    })
}
