//! Numerical probes of the convergence, regret and expressivity statements
//! on objectives where curvature, drift and optima are known exactly.
//!
//! All probes use plain gradient steps. Every probe is a pure function of
//! its inputs and seed.

mod expressivity;
mod quadratic;
mod regret;
mod suites;

pub use expressivity::{
    conflicting_linear_tasks, expressivity_probe, identical_linear_tasks, ExpressivityReport,
    RegressionTask,
};
pub use quadratic::{pl_contraction_probe, DriftBound, DriftingQuadratic, OptimumPath, PLProbeReport};
pub use regret::{
    calibrate_bound_constants, dynamic_regret_run, regret_bound_check, regret_bound_check_with,
    BoundConstants, RegretReport,
};
pub use suites::{
    run_expressivity_suite, run_pl_suite, run_regret_suite, ExpressivitySuiteConfig,
    ExpressivitySuiteReport, PlInstanceSummary, PlSuiteConfig, PlSuiteReport, RegretSuiteConfig,
    RegretSuiteReport,
};

/// Slack below this counts as a violated inequality.
pub const VIOLATION_TOLERANCE: f64 = -1e-9;

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> crate::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| crate::Error::Contract(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
