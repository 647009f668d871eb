//! Test report schema shared by the univariate and multivariate engines.
//!
//! Serialized reports are versioned (`"schema": "1"`) and use fixed field
//! names so downstream scripts can parse them.

use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Accept,
}

/// Optimizer and numerical diagnostics attached to a report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    /// Objective evaluations spent across all optimizer runs.
    pub optimizer_evaluations: usize,
    pub optimizer_restarts: usize,
    /// Finite-difference gradient norm at the estimate.
    pub stationarity: f64,
    /// Spacings (or xi values) floored because of ties or underflow.
    pub floored_count: usize,
    /// Monte-Carlo replicates used for calibration, when applicable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_reps: Option<usize>,
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub schema: &'static str,
    #[serde(rename = "raw_T")]
    pub raw_t: f64,
    #[serde(rename = "T_tilde")]
    pub t_tilde: f64,
    /// Chi-square degrees of freedom; 0 when the reference law is simulated.
    pub df: u32,
    pub p_value: f64,
    pub estimate: Vec<f64>,
    pub m: u32,
    pub phi: String,
    /// Univariate calibration constants; absent for ball-spacings tests.
    pub sigma2: Option<f64>,
    pub e2: Option<f64>,
    /// Ball-spacings calibration constants; absent for univariate tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_q2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub decision: Decision,
    pub level: f64,
    pub diagnostics: Diagnostics,
}

impl TestReport {
    pub fn rejected(&self) -> bool {
        self.decision == Decision::Reject
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
