//! Parent-selection math: sigmoid normalization against the no-memory
//! baseline, a log visit penalty, and a temperature softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Visit-penalized softmax sampling without replacement.
    #[default]
    Weighted,
    /// Always expand the single best design.
    Greedy,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Strategy::Weighted),
            "greedy" => Ok(Strategy::Greedy),
            other => Err(Error::usage(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// Sigmoid steepness.
    pub lambda: f64,
    /// Visit penalty weight.
    pub alpha: f64,
    pub temperature: f64,
    /// Deployment score of the policy without memory access.
    pub baseline_score: f64,
    /// Number of log entries kept per design.
    pub log_sample_size: usize,
    pub strategy: Strategy,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 0.5,
            temperature: 0.5,
            baseline_score: 0.0,
            log_sample_size: 6,
            strategy: Strategy::Weighted,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::usage(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::usage(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::usage(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.baseline_score) {
            return Err(Error::usage(format!(
                "baseline_score must lie in [0,1], got {}",
                self.baseline_score
            )));
        }
        if self.log_sample_size == 0 {
            return Err(Error::usage("log_sample_size must be positive"));
        }
        Ok(())
    }
}

/// Logistic of `lambda * (score - baseline_score)`.
pub fn normalize_performance(score: f64, params: &SamplingParams) -> f64 {
    let x = params.lambda * (score - params.baseline_score);
    1.0 / (1.0 + (-x).exp())
}

/// `normalized - alpha * ln(1 + visit_count)`.
pub fn sampling_score(normalized: f64, visit_count: u64, params: &SamplingParams) -> f64 {
    normalized - params.alpha * (visit_count as f64).ln_1p()
}

/// Softmax of `scores / temperature`, shifted by the maximum before
/// exponentiation.
pub fn sampling_distribution(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::usage("sampling_distribution needs at least one score"));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::usage(format!("temperature must be positive, got {temperature}")));
    }
    let max = scores
        .iter()
        .map(|s| s / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s / temperature - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Full pipeline for one record: normalize, penalize, ready for the softmax.
pub fn record_score(score: f64, visit_count: u64, params: &SamplingParams) -> f64 {
    sampling_score(normalize_performance(score, params), visit_count, params)
}
