use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plot;
use crate::env::EnvConfig;
use crate::error::Result;
use crate::stats;
use crate::timefeat::Timestamp;

/// One replicate of one method at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub method: String,
    pub seed: u64,
    pub target: Timestamp,
    pub estimate: Option<f64>,
    pub true_value: f64,
    pub error: Option<String>,
}

/// Error decomposition of one method at one sweep value over its
/// successful replicates. `var` is the population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggRow {
    pub method: String,
    pub sweep_value: f64,
    pub mse: f64,
    pub bias2: f64,
    pub var: f64,
    pub se_mse: f64,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mean_estimate: f64,
    pub mean_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub seed: u64,
    pub target: Timestamp,
    pub phi_id: String,
    pub cardinality: usize,
    pub bias_hat: f64,
    pub var_hat: f64,
    pub score: f64,
    pub selected: bool,
}

/// A hyperparameter picked with access to the true value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub sweep_value: f64,
    pub choice: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub resolved_env: EnvConfig,
    pub long: Vec<LongRow>,
    pub agg: Vec<AggRow>,
    pub tune: Vec<TuneRow>,
    pub selections: Vec<Selection>,
}

impl ExperimentReport {
    pub fn agg_row(&self, method: &str, sweep_value: f64) -> Option<&AggRow> {
        self.agg
            .iter()
            .find(|r| r.method == method && r.sweep_value == sweep_value)
    }
}

/// Aggregate rows in order of first appearance of `(method, sweep_value)`.
///
/// Squared bias and variance are computed per target time and averaged with
/// weights equal to the number of successful rows, so `mse = bias2 + var`
/// holds exactly and biases at different targets cannot cancel.
pub fn aggregate(long: &[LongRow]) -> Vec<AggRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for row in long {
        if !keys
            .iter()
            .any(|(m, v)| *m == row.method && *v == row.sweep_value)
        {
            keys.push((row.method.clone(), row.sweep_value));
        }
    }
    keys.into_iter()
        .map(|(method, sweep_value)| {
            let group: Vec<&LongRow> = long
                .iter()
                .filter(|r| r.method == method && r.sweep_value == sweep_value)
                .collect();
            let ok: Vec<&LongRow> = group
                .iter()
                .copied()
                .filter(|r| r.estimate.is_some())
                .collect();
            let error = |r: &LongRow| r.estimate.expect("successful row") - r.true_value;
            let squared: Vec<f64> = ok.iter().map(|r| error(r).powi(2)).collect();
            let mut targets: Vec<i64> = ok.iter().map(|r| r.target).collect();
            targets.sort_unstable();
            targets.dedup();
            let (mut bias2, mut var) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (0.0, 0.0)
            };
            for t in targets {
                let errors: Vec<f64> = ok
                    .iter()
                    .filter(|r| r.target == t)
                    .map(|r| error(r))
                    .collect();
                let w = errors.len() as f64 / ok.len() as f64;
                bias2 += w * stats::mean(&errors).powi(2);
                var += w * stats::pop_variance(&errors);
            }
            let estimates: Vec<f64> = ok
                .iter()
                .map(|r| r.estimate.expect("successful row"))
                .collect();
            let truths: Vec<f64> = ok.iter().map(|r| r.true_value).collect();
            AggRow {
                method,
                sweep_value,
                mse: stats::mean(&squared),
                bias2,
                var,
                se_mse: if squared.len() > 1 {
                    stats::std_error(&squared)
                } else {
                    0.0
                },
                n_seeds: ok.len(),
                n_failed: group.len() - ok.len(),
                mean_estimate: stats::mean(&estimates),
                mean_true: stats::mean(&truths),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const LONG_HEADER: [&str; 8] = [
    "sweep_axis",
    "sweep_value",
    "method",
    "seed",
    "target",
    "estimate",
    "true_value",
    "error",
];
pub const AGG_HEADER: [&str; 10] = [
    "method",
    "sweep_value",
    "mse",
    "bias2",
    "var",
    "se_mse",
    "n_seeds",
    "n_failed",
    "mean_estimate",
    "mean_true",
];
pub const TUNE_HEADER: [&str; 8] = [
    "seed",
    "target",
    "phi_id",
    "cardinality",
    "bias_hat",
    "var_hat",
    "score",
    "selected",
];

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    resolved_env: &'a EnvConfig,
    selections: &'a [Selection],
}

/// Write `long.csv`, `agg.csv`, `meta.json` and, for tuning runs, `tune.csv`
/// into `dir`. With `plot` set, also an SVG of MSE against the sweep value.
pub fn emit_report(report: &ExperimentReport, dir: &Path, plot: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("long.csv"), &LONG_HEADER, &report.long)?;
    write_csv(&dir.join("agg.csv"), &AGG_HEADER, &report.agg)?;
    if !report.tune.is_empty() {
        write_csv(&dir.join("tune.csv"), &TUNE_HEADER, &report.tune)?;
    }
    let meta = Meta {
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        resolved_env: &report.resolved_env,
        selections: &report.selections,
    };
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    fs::write(dir.join("meta.json"), json)?;
    if plot {
        let axis = report
            .config
            .sweep
            .as_ref()
            .map(|s| s.axis.name())
            .unwrap_or("none");
        fs::write(
            dir.join("mse.svg"),
            plot::line_chart(&report.agg, axis, |r| r.mse, "MSE"),
        )?;
        fs::write(
            dir.join("value.svg"),
            plot::line_chart(&report.agg, axis, |r| r.mean_estimate, "mean estimate"),
        )?;
    }
    Ok(())
}

/// The tuning table as CSV text.
pub fn tune_csv(rows: &[TuneRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(TUNE_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
