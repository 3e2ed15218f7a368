use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::Rng64;

/// Samples of one task: feature rows and scalar targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTask {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityReport {
    pub budget: usize,
    pub episodes: usize,
    /// Features available to the shared fit, `min(P, F)`.
    pub static_width: usize,
    /// Features available to each per-task fit, `min(P/K, F)`.
    pub dynamic_width: usize,
    pub static_errors: Vec<f64>,
    pub dynamic_errors: Vec<f64>,
    pub static_worst_error: f64,
    pub dynamic_worst_error: f64,
}

fn design(tasks: &[&RegressionTask], width: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows: usize = tasks.iter().map(|t| t.targets.len()).sum();
    let mut x = DMatrix::zeros(rows, width);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for t in tasks {
        for (f, target) in t.features.iter().zip(&t.targets) {
            for c in 0..width {
                x[(r, c)] = f[c];
            }
            y[r] = *target;
            r += 1;
        }
    }
    (x, y)
}

/// Minimum-norm least-squares weights.
fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let eps = 1e-12 * x.amax().max(1.0) * (x.nrows().max(x.ncols()) as f64);
    x.clone()
        .svd(true, true)
        .solve(y, eps)
        .expect("svd computed with both factors")
}

fn task_mse(task: &RegressionTask, w: &DVector<f64>) -> f64 {
    let (x, y) = design(&[task], w.len());
    (x * w - y).norm_squared() / task.targets.len() as f64
}

/// Worst-task least-squares error of one shared linear-in-features fit with
/// `min(P, F)` features against separate per-task fits with `min(P/K, F)`
/// features each.
pub fn expressivity_probe(tasks: &[RegressionTask], budget: usize) -> Result<ExpressivityReport> {
    let k = tasks.len();
    if k < 2 {
        return Err(Error::config("tasks", format!("need at least 2 tasks, got {k}")));
    }
    if budget == 0 || !budget.is_multiple_of(k) {
        return Err(Error::config(
            "budget",
            format!("budget {budget} must be a positive multiple of the task count {k}"),
        ));
    }
    let f = tasks[0].features.first().map_or(0, Vec::len);
    if f == 0 {
        return Err(Error::config("tasks", "tasks need at least one feature"));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.targets.is_empty() || t.features.len() != t.targets.len() {
            return Err(Error::dim(format!(
                "task {i}: {} feature rows for {} targets",
                t.features.len(),
                t.targets.len()
            )));
        }
        if t.features.iter().any(|r| r.len() != f) {
            return Err(Error::dim(format!("task {i}: feature rows must all have width {f}")));
        }
    }
    let static_width = budget.min(f);
    let dynamic_width = (budget / k).min(f);

    let all: Vec<&RegressionTask> = tasks.iter().collect();
    let (x, y) = design(&all, static_width);
    let shared = lstsq(&x, &y);
    let static_errors: Vec<f64> = tasks.iter().map(|t| task_mse(t, &shared)).collect();

    let dynamic_errors: Vec<f64> = tasks
        .iter()
        .map(|t| {
            let (x, y) = design(&[t], dynamic_width);
            task_mse(t, &lstsq(&x, &y))
        })
        .collect();

    let worst = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(ExpressivityReport {
        budget,
        episodes: k,
        static_width,
        dynamic_width,
        static_worst_error: worst(&static_errors),
        dynamic_worst_error: worst(&dynamic_errors),
        static_errors,
        dynamic_errors,
    })
}

/// Polynomial features `x, x^2, ..., x^F`.
fn poly(x: f64, features: usize) -> Vec<f64> {
    (1..=features as i32).map(|p| x.powi(p)).collect()
}

fn linear_task(slope: f64, xs: &[f64], noise: &[f64], features: usize) -> RegressionTask {
    RegressionTask {
        features: xs.iter().map(|&x| poly(x, features)).collect(),
        targets: xs.iter().zip(noise).map(|(x, e)| slope * x + e).collect(),
    }
}

fn draws(rng: &mut Rng64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn noise_draws(rng: &mut Rng64, n: usize, noise: f64) -> Vec<f64> {
    if noise > 0.0 {
        draws(rng, n, -noise, noise)
    } else {
        vec![0.0; n]
    }
}

/// `k` tasks `y = a_i x + noise` on shared inputs `x ~ U[-1, 1)`, slopes of
/// magnitude in `[0.5, 1.5)` with alternating signs.
pub fn conflicting_linear_tasks(
    k: usize,
    samples: usize,
    features: usize,
    noise: f64,
    rng: &mut Rng64,
) -> Vec<RegressionTask> {
    let xs = draws(rng, samples, -1.0, 1.0);
    (0..k)
        .map(|i| {
            let a = rng.gen_range(0.5..1.5) * if i % 2 == 0 { 1.0 } else { -1.0 };
            let e = noise_draws(rng, samples, noise);
            linear_task(a, &xs, &e, features)
        })
        .collect()
}

/// `k` copies of one task `y = a x + noise`.
pub fn identical_linear_tasks(
    k: usize,
    samples: usize,
    features: usize,
    noise: f64,
    rng: &mut Rng64,
) -> Vec<RegressionTask> {
    let xs = draws(rng, samples, -1.0, 1.0);
    let a = rng.gen_range(0.5..1.5);
    let e = noise_draws(rng, samples, noise);
    vec![linear_task(a, &xs, &e, features); k]
}
