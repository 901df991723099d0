//! The run summary written as JSON next to the trajectory files.

use proxcmo::dynamics::{DynamicsVariant, GainSet};
use proxcmo::experiments::shidoku::Grid;
use proxcmo::gains::TheoremCertificate;
use proxcmo::integrate::{IntegratorConfig, StopReason};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentKind, RunConfig};

/// Non-finite values become `None` so that the document round-trips.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoMetrics {
    /// `‖Ax − b‖₂`.
    pub residual: f64,
    pub l0: usize,
    pub l1: f64,
    pub support_error: usize,
    pub l1_overshoot: f64,
    pub error_vs_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShidokuMetrics {
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidMetrics {
    pub theta_lower: Vec<Option<f64>>,
    pub theta_upper: Vec<Option<f64>>,
    pub theta_hat: Vec<Option<f64>>,
    pub fit: Option<f64>,
    pub fit_standard: Option<f64>,
    pub max_constraint_residual: Option<f64>,
    pub max_set_violation: Option<f64>,
    pub failed_subproblems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub gains: GainSet,
    /// Instance seed (Lasso, sysid) or initial-condition seed (Shidoku).
    pub seed: u64,
    /// Trajectory CSVs, relative to the output directory.
    pub trajectories: Vec<String>,
    pub final_time: Option<f64>,
    pub stop: Option<StopReason>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub res_stat: Option<f64>,
    pub res_feas: Option<f64>,
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lasso: Option<LassoMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shidoku: Option<ShidokuMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sysid: Option<SysidMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub failures: usize,
    pub mean_res_stat: Option<f64>,
    pub mean_res_feas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_final_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_l0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_support_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_fit: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64).and_then(finite)
}

impl Aggregate {
    pub fn from_runs(runs: &[RunRecord]) -> Self {
        let lasso: Vec<&LassoMetrics> = runs.iter().filter_map(|r| r.lasso.as_ref()).collect();
        let shidoku: Vec<&ShidokuMetrics> =
            runs.iter().filter_map(|r| r.shidoku.as_ref()).collect();
        let sysid: Vec<&SysidMetrics> = runs.iter().filter_map(|r| r.sysid.as_ref()).collect();
        Self {
            runs: runs.len(),
            failures: runs.iter().filter(|r| r.failure.is_some()).count(),
            mean_res_stat: mean(runs.iter().filter_map(|r| r.res_stat)),
            mean_res_feas: mean(runs.iter().filter_map(|r| r.res_feas)),
            mean_final_residual: mean(lasso.iter().map(|m| m.residual)),
            mean_l0: mean(lasso.iter().map(|m| m.l0 as f64)),
            mean_support_error: mean(lasso.iter().map(|m| m.support_error as f64)),
            success_rate: (!shidoku.is_empty()).then(|| {
                shidoku.iter().filter(|m| m.success).count() as f64 / shidoku.len() as f64
            }),
            mean_fit: mean(sysid.iter().filter_map(|m| m.fit)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: DynamicsVariant,
    pub integrator: IntegratorConfig,
    /// Set when the run lies outside the assumptions of every convergence result.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    pub aggregate: Aggregate,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    /// The effective configuration, without the output directory.
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<TheoremCertificate>,
    /// Every file written for this run, relative to the output directory.
    pub artifacts: Vec<String>,
    pub integrator_failures: usize,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
