use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::EvalReport;
use crate::error::{Error, Result};
use crate::io::write_text;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub variant: String,
    /// Mean over seeds of each seed's mean query MSE.
    pub mean_mse: f64,
    /// Population standard deviation over seeds.
    pub std_mse: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub cells: Vec<TableCell>,
    /// `100 * (1 - best dynamic / best other)`; absent when either side is missing.
    pub imp_pct: Option<f64>,
}

/// Rows sorted by dataset, cells by variant label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub imp_rule: String,
    pub rows: Vec<TableRow>,
}

const IMP_RULE: &str = "imp = 1 - (lowest MSE among dynamic columns) / (lowest MSE among the other columns), in percent";

fn is_dynamic(label: &str) -> bool {
    label.starts_with("dynamic")
}

/// Improvement of the best dynamic column over the best other column, in percent.
pub fn imp_pct(cells: &[TableCell]) -> Option<f64> {
    let best = |dynamic: bool| {
        cells
            .iter()
            .filter(|c| is_dynamic(&c.variant) == dynamic)
            .map(|c| c.mean_mse)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
    };
    Some(100.0 * (1.0 - best(true)? / best(false)?))
}

/// Averages reports across seeds per `(dataset, variant)`; every variant seen
/// in any row must be present in every row.
pub fn build_table(reports: &[EvalReport]) -> Result<ResultsTable> {
    if reports.is_empty() {
        return Err(Error::Incomplete("no evaluation reports".into()));
    }
    let mut cells: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in reports {
        cells
            .entry(r.dataset.as_str())
            .or_default()
            .entry(r.variant.as_str())
            .or_default()
            .push(r.mean_mse);
    }
    let variants: std::collections::BTreeSet<&str> = cells.values().flat_map(|m| m.keys().copied()).collect();
    let missing: Vec<String> = cells
        .iter()
        .flat_map(|(d, m)| {
            variants
                .iter()
                .filter(|v| !m.contains_key(*v))
                .map(move |v| format!("{d}/{v}"))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete(format!("missing cells: {}", missing.join(", "))));
    }
    let rows = cells
        .into_iter()
        .map(|(dataset, m)| {
            let cells: Vec<TableCell> = m
                .into_iter()
                .map(|(variant, v)| {
                    let (mean, std) = crate::adapt::mean_std(&v);
                    TableCell {
                        variant: variant.to_string(),
                        mean_mse: mean,
                        std_mse: std,
                        seeds: v.len(),
                    }
                })
                .collect();
            TableRow {
                dataset: dataset.to_string(),
                imp_pct: imp_pct(&cells),
                cells,
            }
        })
        .collect();
    Ok(ResultsTable {
        imp_rule: IMP_RULE.into(),
        rows,
    })
}

/// `%.6g`-style formatting: six significant digits, trailing zeros trimmed.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| s.trim_end_matches('0').trim_end_matches('.').to_string();
    if (-5..6).contains(&e) {
        let s = format!("{:.*}", (5 - e) as usize, x);
        if s.contains('.') {
            trim(&s)
        } else {
            s
        }
    } else {
        format!("{}e{e}", trim(mantissa))
    }
}

/// Writes `dataset,variant,mean_mse,std_mse,imp_pct`, one row per cell.
pub fn export_csv(table: &ResultsTable, out: &Path) -> Result<()> {
    if table.rows.iter().all(|r| r.cells.is_empty()) {
        return Err(Error::Incomplete("table has no cells".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| Error::Contract(format!("csv encoding failed: {e}"));
    w.write_record(["dataset", "variant", "mean_mse", "std_mse", "imp_pct"]).map_err(enc)?;
    for row in &table.rows {
        for c in &row.cells {
            let imp = row.imp_pct.map(fmt_sig6).unwrap_or_default();
            w.write_record([
                row.dataset.as_str(),
                c.variant.as_str(),
                &fmt_sig6(c.mean_mse),
                &fmt_sig6(c.std_mse),
                &imp,
            ])
            .map_err(enc)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    write_text(out, &String::from_utf8(bytes).expect("utf-8"))
}
