//! CSV output.
//!
//! Reals are written with Rust's shortest round-trip formatting, `inf` for
//! an unbounded epsilon and `NA` for an undefined rate. `metrics.csv` and
//! `summary.csv` hold only seed-determined values; wall-clock timings go to
//! `timings.csv`.

use crate::error::RunError;
use crate::runner::config::ExperimentConfig;
use crate::runner::experiment::RunReport;
use std::fs;
use std::path::Path;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

pub const METRICS_HEADER: [&str; 9] = [
    "round",
    "global_loss",
    "sync_error",
    "accuracy",
    "fpr",
    "fnr",
    "epsilon",
    "updates_applied",
    "updates_dropped",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "scenario",
    "clients",
    "rounds",
    "n_train",
    "n_test",
    "accuracy",
    "fpr",
    "fnr",
    "global_loss",
    "sync_error",
    "epsilon",
    "bayes_accuracy",
    "analytic_flops",
];

pub const TIMINGS_HEADER: [&str; 4] = ["round", "train_seconds", "cumulative_train_seconds", "detect_seconds"];

pub fn real(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn rate(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), real)
}

/// Writes a header and rows to `path`.
pub fn write_csv<const N: usize>(path: &Path, header: &[&str; N], rows: &[[String; N]]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the metrics, summary, timings and resolved config of one run
/// into `dir`, creating it if needed.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &RunReport) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let metrics: Vec<[String; 9]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.round.to_string(),
                real(r.global_loss),
                real(r.sync_error),
                real(r.accuracy),
                rate(r.fpr),
                rate(r.fnr),
                real(r.epsilon),
                r.updates_applied.to_string(),
                r.updates_dropped.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join(METRICS_FILE), &METRICS_HEADER, &metrics)?;

    let s = &report.summary;
    let summary = [[
        s.scenario.clone(),
        s.clients.to_string(),
        s.rounds.to_string(),
        s.n_train.to_string(),
        s.n_test.to_string(),
        real(s.accuracy),
        rate(s.fpr),
        rate(s.fnr),
        real(s.global_loss),
        real(s.sync_error),
        real(s.epsilon),
        real(s.bayes_accuracy),
        s.analytic_flops.to_string(),
    ]];
    write_csv(&dir.join(SUMMARY_FILE), &SUMMARY_HEADER, &summary)?;

    let mut timings: Vec<[String; 4]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.round.to_string(),
                real(r.train_seconds),
                real(r.cumulative_train_seconds),
                real(r.detect_seconds),
            ]
        })
        .collect();
    timings.push([
        "total".into(),
        real(s.train_seconds),
        real(s.train_seconds),
        real(s.detect_seconds),
    ]);
    write_csv(&dir.join(TIMINGS_FILE), &TIMINGS_HEADER, &timings)?;

    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.resolved()?.to_toml_string()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodings() {
        assert_eq!(real(0.1), "0.1");
        assert_eq!(real(1.0), "1");
        assert_eq!(real(1e-20), "0.00000000000000000001");
        assert_eq!(real(f64::INFINITY), "inf");
        assert_eq!(rate(None), "NA");
        assert_eq!(rate(Some(0.25)), "0.25");
        assert_eq!(0.1f64, real(0.1).parse::<f64>().unwrap());
    }
}
