use serde::{Deserialize, Serialize};

use crate::serde_inf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TargetReached,
    MaxSteps,
    AcceptanceFloor,
    Budget,
    /// No smaller tolerance keeps any particle alive.
    Stalled,
    Failed,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::TargetReached => "target-reached",
            Self::MaxSteps => "max-steps",
            Self::AcceptanceFloor => "acceptance-floor",
            Self::Budget => "budget",
            Self::Stalled => "stalled",
            Self::Failed => "failed",
        };
        f.write_str(s)
    }
}

/// Diagnostics of one outer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    #[serde(with = "serde_inf")]
    pub epsilon: f64,
    /// ESS after reweighting.
    pub ess: f64,
    /// CESS of the chosen tolerance.
    pub cess: f64,
    pub resampled: bool,
    /// Acceptance rate of the first (probe) MCMC iteration.
    pub acceptance: Option<f64>,
    /// MCMC iterations applied to every particle.
    pub moves: usize,
    /// Mean acceptance of the inner moves, rare-event path only.
    pub inner_acceptance: Option<f64>,
    /// Cumulative log evidence after this step.
    pub log_evidence: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub thetas: Vec<Vec<f64>>,
    /// Normalized weights, aligned with `thetas`.
    pub weights: Vec<f64>,
    pub steps: Vec<StepDiagnostics>,
    pub log_evidence: f64,
    pub stop_reason: StopReason,
    pub elapsed_secs: f64,
    pub error: Option<String>,
}

impl RunResult {
    /// Last tolerance reached, `inf` before the first step.
    pub fn final_epsilon(&self) -> f64 {
        self.steps.last().map_or(f64::INFINITY, |s| s.epsilon)
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let dim = self.thetas.first().map_or(0, Vec::len);
        (0..dim)
            .map(|i| self.thetas.iter().zip(&self.weights).map(|(t, w)| w * t[i]).sum())
            .collect()
    }

    /// Cumulative log evidence `sum_t log sum_m w~_t^m`.
    pub fn evidence_estimate(&self) -> f64 {
        self.log_evidence
    }

    pub fn succeeded(&self) -> bool {
        self.stop_reason != StopReason::Failed
    }
}
