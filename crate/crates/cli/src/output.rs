//! Trajectory CSV and run summary JSON.

use std::fs;
use std::io::Write;
use std::path::Path;

use relu_lab_core::optimizer::{BoundsUsed, TrajectoryRecord};
use serde::{Deserialize, Serialize};

use crate::config::HarnessConfig;
use crate::CliResult;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

pub const TRAJECTORY_HEADER: [&str; 7] = ["step", "gamma", "emp_risk", "true_risk", "V", "grad_norm", "descent_residual"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config_hash: String,
    pub mode: String,
    pub steps: usize,
    pub stopped_early: bool,
    pub final_true_risk: f64,
    pub final_emp_risk: Option<f64>,
    pub initial_v: f64,
    pub final_v: f64,
    pub max_norm: f64,
    pub norm_cap: f64,
    pub v_monotone: bool,
    pub monitors_enforced: bool,
    pub max_descent_residual: f64,
    pub bounds: BoundsUsed,
}

impl Summary {
    pub fn new(cfg: &HarnessConfig, rec: &TrajectoryRecord) -> Self {
        Self {
            seed: cfg.run.seed,
            config_hash: cfg.hash(),
            mode: cfg.run.mode.clone(),
            steps: rec.steps(),
            stopped_early: rec.stopped_early,
            final_true_risk: rec.final_true_risk,
            final_emp_risk: rec.rows.last().and_then(|r| r.emp_risk),
            initial_v: rec.initial_v,
            final_v: rec.final_v,
            max_norm: rec.max_norm,
            norm_cap: rec.initial_v.sqrt(),
            v_monotone: rec.v_monotone,
            monitors_enforced: rec.enforced,
            max_descent_residual: rec.rows.iter().map(|r| r.descent_residual).fold(0.0, f64::max),
            bounds: rec.validation.bounds().clone(),
        }
    }
}

fn real(x: f64) -> String {
    format!("{x:e}")
}

/// CSV bytes for a trajectory; missing risks are empty fields.
pub fn trajectory_csv(rec: &TrajectoryRecord) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for row in &rec.rows {
        w.write_record([
            row.step.to_string(),
            real(row.gamma),
            row.emp_risk.map(real).unwrap_or_default(),
            row.true_risk.map(real).unwrap_or_default(),
            real(row.v),
            real(row.grad_norm),
            real(row.descent_residual),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn csv_err(e: csv::Error) -> crate::CliError {
    std::io::Error::other(e.to_string()).into()
}

/// Writes `trajectory.csv`, `summary.json` and the resolved `config.json` into `dir`.
pub fn write_run(dir: &Path, cfg: &HarnessConfig, rec: &TrajectoryRecord) -> CliResult<Summary> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TRAJECTORY_FILE), trajectory_csv(rec)?)?;
    let summary = Summary::new(cfg, rec);
    let mut f = fs::File::create(dir.join(SUMMARY_FILE))?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(std::io::Error::from)?;
    writeln!(f)?;
    let cfg_text = serde_json::to_string_pretty(cfg).map_err(std::io::Error::from)?;
    fs::write(dir.join(CONFIG_FILE), cfg_text + "\n")?;
    Ok(summary)
}
