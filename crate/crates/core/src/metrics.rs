//! Tracking metrics and their JSON report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension {dim} out of range for {available} error components")]
    Dimension { dim: usize, available: usize },
    #[error("path diameter must be positive, got {0}")]
    InvalidDiameter(f64),
    #[error("empty trace")]
    Empty,
    #[error("invalid metrics json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Mean absolute scoring error of component `dim` over the trace.
pub fn absolute_average_error(trace: &Trace, dim: usize) -> Result<f64> {
    let errs = trace.metric_errors();
    if errs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let available = errs[0].len();
    if dim >= available {
        return Err(MetricsError::Dimension { dim, available });
    }
    Ok(errs.iter().map(|e| e[dim].abs()).sum::<f64>() / errs.len() as f64)
}

/// `100 · ae / diameter`.
pub fn percent_error(ae: f64, diameter: f64) -> Result<f64> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return Err(MetricsError::InvalidDiameter(diameter));
    }
    Ok(100.0 * ae / diameter)
}

/// `Σ |Δu_r| + |Δu_l|` over consecutive samples.
pub fn total_variation(u_r: &[f64], u_l: &[f64]) -> Result<f64> {
    if u_r.len() != u_l.len() {
        return Err(MetricsError::LengthMismatch(u_r.len(), u_l.len()));
    }
    let tv = |u: &[f64]| u.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
    Ok(tv(u_r) + tv(u_l))
}

/// Total variation of every command channel of a trace, summed.
pub fn trace_total_variation(trace: &Trace) -> f64 {
    (0..trace.dim)
        .map(|i| {
            let u: Vec<f64> = trace.tau_cmd.iter().map(|v| v[i]).collect();
            u.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        })
        .sum()
}

/// Largest scoring-error norm over the last half of the trace.
pub fn sup_error_tail(trace: &Trace) -> f64 {
    let errs = trace.metric_errors();
    let start = errs.len() / 2;
    errs[start..].iter().map(|e| e.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub ae_per_dim: Vec<f64>,
    /// Empty when the reference has no path diameter.
    pub pct_ae_per_dim: Vec<f64>,
    pub tv: f64,
    pub sup_error_tail: f64,
    pub runtime_s: f64,
    pub scenario_hash: String,
}

impl MetricsReport {
    pub fn from_trace(
        trace: &Trace,
        diameter: Option<f64>,
        runtime_s: f64,
        scenario_hash: &str,
    ) -> Result<Self> {
        if trace.is_empty() {
            return Err(MetricsError::Empty);
        }
        let dims = trace.metric_errors()[0].len();
        let ae_per_dim = (0..dims)
            .map(|d| absolute_average_error(trace, d))
            .collect::<Result<Vec<_>>>()?;
        let pct_ae_per_dim = match diameter {
            Some(dia) => ae_per_dim
                .iter()
                .map(|ae| percent_error(*ae, dia))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(MetricsReport {
            ae_per_dim,
            pct_ae_per_dim,
            tv: trace_total_variation(trace),
            sup_error_tail: sup_error_tail(trace),
            runtime_s,
            scenario_hash: scenario_hash.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MetricsError::Json(e.to_string()))
    }
}
