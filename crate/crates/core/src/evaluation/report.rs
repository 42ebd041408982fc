use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Deployment, EvalFault, Mode};
use crate::archive::LogEntry;
use crate::environments::TaskSpec;
use crate::error::Result;
use crate::provider::{end_to_end_memory_cost, Caller, CostLedger, Phase, TokenScheme};
use crate::util::{write_json, write_string};
use crate::FORMAT_VERSION;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n − 1) over √n; exactly 0 for fewer than two
/// values or identical values.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 || xs.iter().all(|x| *x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub token_scheme: TokenScheme,
    pub end_to_end_memory_cost_micros: u64,
    pub memory_collection_micros: u64,
    pub memory_deployment_micros: u64,
    pub policy_micros: u64,
    /// Mean token count of retrieved knowledge per deployment task.
    pub mean_retrieved_tokens: f64,
    pub ledger: CostLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub design_id: String,
    pub mode: Mode,
    pub repeats: usize,
    pub collection_tasks: Vec<String>,
    pub deployment_tasks: Vec<String>,
    pub mean_score: f64,
    pub standard_error: f64,
    pub repeat_means: Vec<f64>,
    pub faults: Vec<EvalFault>,
    pub cost: CostReport,
    /// One list per repeat, in deployment-task order.
    pub per_task: Vec<Vec<LogEntry>>,
}

impl EvaluationReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        design_id: &str,
        mode: Mode,
        repeats: usize,
        collection: &[TaskSpec],
        deployment: &[TaskSpec],
        outcome: Deployment,
        ledger: CostLedger,
        scheme: TokenScheme,
    ) -> Self {
        let repeat_means: Vec<f64> = outcome
            .per_task
            .iter()
            .map(|r| mean(&r.iter().map(|e| e.feedback).collect::<Vec<_>>()))
            .collect();
        let all: Vec<f64> = outcome.per_task.iter().flatten().map(|e| e.feedback).collect();
        let totals = ledger.totals();
        let memory = |phase| totals.get(&(Caller::MemoryDesign, phase)).map_or(0, |t| t.cost_micros);
        let tokens: Vec<f64> = outcome.retrieved_tokens.iter().map(|&t| t as f64).collect();
        Self {
            format_version: FORMAT_VERSION,
            design_id: design_id.to_string(),
            mode,
            repeats,
            collection_tasks: collection.iter().map(|t| t.task_id.clone()).collect(),
            deployment_tasks: deployment.iter().map(|t| t.task_id.clone()).collect(),
            mean_score: mean(&all),
            standard_error: standard_error(&repeat_means),
            repeat_means,
            faults: outcome.faults,
            cost: CostReport {
                token_scheme: scheme,
                end_to_end_memory_cost_micros: end_to_end_memory_cost(&ledger),
                memory_collection_micros: memory(Phase::Collection),
                memory_deployment_micros: memory(Phase::Deployment),
                policy_micros: ledger.total_for(Caller::Policy).cost_micros,
                mean_retrieved_tokens: mean(&tokens),
                ledger,
            },
            per_task: outcome.per_task,
        }
    }

    /// All deployment log entries, repeats concatenated.
    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.per_task.iter().flatten().cloned().collect()
    }

    /// Deployment successes and total episodes at `threshold`.
    pub fn successes(&self, threshold: f64) -> (usize, usize) {
        let all = self.per_task.iter().flatten();
        let n = all.clone().count();
        (all.filter(|e| e.feedback >= threshold).count(), n)
    }
}

/// Writes `report.json`, `trajectories.jsonl` (one step per line) and
/// `ledger.jsonl` under `dir`. Returns the report path.
pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<PathBuf> {
    let path = dir.join("report.json");
    write_json(&path, report)?;
    let mut lines = String::new();
    for (repeat, entries) in report.per_task.iter().enumerate() {
        for entry in entries {
            for (i, step) in entry.trajectory.steps.iter().enumerate() {
                let line = json!({
                    "repeat": repeat,
                    "task_id": entry.task_id,
                    "step": i,
                    "observation": step.observation,
                    "action": step.action,
                });
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
        }
    }
    write_string(&dir.join("trajectories.jsonl"), &lines)?;
    write_string(&dir.join("ledger.jsonl"), &report.cost.ledger.to_jsonl())?;
    Ok(path)
}
