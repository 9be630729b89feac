//! Machine-readable run reports and CSV trajectory tables.

use std::io::Write;
use std::path::Path;

use impulse_heat::heat::Trajectory;
use impulse_heat::policy;
use impulse_heat::RankTolerance;
use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;

/// Finite numbers as JSON numbers; `±∞` and NaN as strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("infinity")
    } else {
        Value::from("-infinity")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySnapshot {
    pub real_eigenvalue_cut: f64,
    pub window_boundary_band: f64,
    pub exact_steering_residual: f64,
    pub eigen_max_dim: usize,
    pub eigen_residual: f64,
    pub reachability_entry_guard: usize,
    pub default_modes: usize,
}

impl PolicySnapshot {
    pub fn current() -> Self {
        Self {
            real_eigenvalue_cut: policy::REAL_EIGENVALUE_CUT,
            window_boundary_band: policy::WINDOW_BOUNDARY_BAND,
            exact_steering_residual: policy::EXACT_STEERING_RESIDUAL,
            eigen_max_dim: policy::EIGEN_MAX_DIM,
            eigen_residual: policy::EIGEN_RESIDUAL,
            reachability_entry_guard: policy::REACHABILITY_ENTRY_GUARD,
            default_modes: policy::DEFAULT_MODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub rank_tolerance: String,
    pub policy: PolicySnapshot,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_time_seconds: f64,
}

impl Provenance {
    pub fn new(tol: RankTolerance, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rank_tolerance: match tol {
                RankTolerance::Relative => "relative: sigma_max * max(rows, cols) * eps".to_string(),
                RankTolerance::Absolute(t) => format!("absolute: {t:e}"),
            },
            policy: PolicySnapshot::current(),
            seed,
            wall_time_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
    pub results: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
    pub provenance: Provenance,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Norm time series: `t, total_norm, mode_k_norm…, comp_i_norm…`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let first = &traj.points[0].state;
        let mut header = vec!["t".to_string(), "total_norm".to_string()];
        header.extend((1..=first.modes()).map(|k| format!("mode_{k}_norm")));
        header.extend((1..=first.components()).map(|i| format!("comp_{i}_norm")));
        let rows = traj
            .points
            .iter()
            .map(|p| {
                let mut row = vec![p.time, p.state.norm()];
                row.extend(p.state.mode_norms());
                row.extend(p.state.component_norms());
                row
            })
            .collect();
        Self { header, rows }
    }

    pub fn write<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> csv::Result<()> {
        self.write(std::fs::File::create(path)?)
    }
}
