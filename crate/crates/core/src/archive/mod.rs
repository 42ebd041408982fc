//! Archive of evaluated memory designs.
//!
//! Records keep insertion order, which doubles as the tie-break order for
//! every argmax in this module. The only field that changes after insertion
//! is `visit_count`.

mod sampling;
mod store;
mod stratified;
mod tree;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::environments::Trajectory;
use crate::error::{Error, Result};

pub use sampling::{
    normalize_performance, record_score, sampling_distribution, sampling_score, SamplingParams,
    Strategy,
};
pub use store::ArchiveDir;
pub use stratified::{allocate, stratified_log_sample, Allocation};
pub use tree::{export_tree, TreeDocument, TreeEdge, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Valid,
    Invalid,
}

/// One deployment log tuple: retrieved knowledge, resulting trajectory and
/// its feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub task_id: String,
    pub knowledge: String,
    pub trajectory: Trajectory,
    pub feedback: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub design_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Path of the design source, relative to the archive directory.
    pub artifact_ref: String,
    pub score: f64,
    pub log_sample: Vec<LogEntry>,
    pub visit_count: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_note: Option<String>,
}

impl DesignRecord {
    pub fn valid(
        design_id: impl Into<String>,
        parent_id: Option<String>,
        artifact_ref: impl Into<String>,
        score: f64,
        log_sample: Vec<LogEntry>,
    ) -> Self {
        Self {
            design_id: design_id.into(),
            parent_id,
            artifact_ref: artifact_ref.into(),
            score,
            log_sample,
            visit_count: 0,
            status: Status::Valid,
            error_note: None,
        }
    }

    pub fn invalid(
        design_id: impl Into<String>,
        parent_id: Option<String>,
        artifact_ref: impl Into<String>,
        error_note: impl Into<String>,
    ) -> Self {
        Self {
            design_id: design_id.into(),
            parent_id,
            artifact_ref: artifact_ref.into(),
            score: 0.0,
            log_sample: Vec::new(),
            visit_count: 0,
            status: Status::Invalid,
            error_note: Some(error_note.into()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Status::Valid
    }

    /// Checks the record-local invariants.
    pub fn check(&self) -> Result<()> {
        if self.design_id.is_empty() {
            return Err(Error::usage("design_id must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::usage(format!(
                "{}: score {} outside [0,1]",
                self.design_id, self.score
            )));
        }
        if self.status == Status::Invalid && (self.score != 0.0 || self.error_note.is_none()) {
            return Err(Error::usage(format!(
                "{}: invalid records need score 0 and an error note",
                self.design_id
            )));
        }
        if let Some(entry) = self.log_sample.iter().find(|e| !(0.0..=1.0).contains(&e.feedback)) {
            return Err(Error::usage(format!(
                "{}: log entry {} has feedback {} outside [0,1]",
                self.design_id, entry.task_id, entry.feedback
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    records: Vec<DesignRecord>,
    pub params: SamplingParams,
    pub step_counter: u64,
}

impl Archive {
    pub fn new(params: SamplingParams) -> Self {
        Self {
            records: Vec::new(),
            params,
            step_counter: 0,
        }
    }

    pub fn records(&self) -> &[DesignRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, design_id: &str) -> Option<&DesignRecord> {
        self.records.iter().find(|r| r.design_id == design_id)
    }

    pub fn contains(&self, design_id: &str) -> bool {
        self.get(design_id).is_some()
    }

    /// Appends a record after checking its invariants and parent link.
    pub fn insert(&mut self, record: DesignRecord) -> Result<()> {
        record.check()?;
        if self.contains(&record.design_id) {
            return Err(Error::usage(format!("duplicate design_id {}", record.design_id)));
        }
        if let Some(parent) = &record.parent_id {
            if !self.contains(parent) {
                return Err(Error::usage(format!(
                    "{}: parent {parent} is not in the archive",
                    record.design_id
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Adds one visit per listed id; repeated ids count repeatedly. Nothing
    /// changes if any id is unknown.
    pub fn increment_visits<S: AsRef<str>>(&mut self, design_ids: &[S]) -> Result<()> {
        let mut positions = Vec::with_capacity(design_ids.len());
        for id in design_ids {
            let id = id.as_ref();
            let pos = self
                .records
                .iter()
                .position(|r| r.design_id == id)
                .ok_or_else(|| Error::usage(format!("unknown design_id {id}")))?;
            positions.push(pos);
        }
        for pos in positions {
            self.records[pos].visit_count += 1;
        }
        Ok(())
    }

    /// Highest-scoring valid record, earliest insertion on ties.
    pub fn best_design(&self) -> Result<&DesignRecord> {
        argmax_by_score(self.records.iter().filter(|r| r.is_valid()))
            .ok_or_else(|| Error::usage("archive holds no valid design"))
    }

    /// Current selection probabilities of all records, in insertion order.
    pub fn distribution(&self) -> Result<Vec<f64>> {
        let scores: Vec<f64> = self
            .records
            .iter()
            .map(|r| record_score(r.score, r.visit_count, &self.params))
            .collect();
        sampling_distribution(&scores, self.params.temperature)
    }

    /// Picks parents for the next step. Visit counts are left untouched.
    pub fn sample_designs<R: RngCore + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<&DesignRecord>> {
        if self.records.is_empty() {
            return Err(Error::usage("cannot sample from an empty archive"));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        match self.params.strategy {
            Strategy::Greedy => Ok(argmax_by_score(self.records.iter()).into_iter().collect()),
            Strategy::Weighted => {
                let mut remaining: Vec<usize> = (0..self.records.len()).collect();
                let mut picked = Vec::with_capacity(k.min(remaining.len()));
                while picked.len() < k && !remaining.is_empty() {
                    let scores: Vec<f64> = remaining
                        .iter()
                        .map(|&i| {
                            let r = &self.records[i];
                            record_score(r.score, r.visit_count, &self.params)
                        })
                        .collect();
                    let probs = sampling_distribution(&scores, self.params.temperature)?;
                    let slot = categorical(&probs, rng.gen::<f64>());
                    picked.push(&self.records[remaining.remove(slot)]);
                }
                Ok(picked)
            }
        }
    }
}

fn argmax_by_score<'a>(records: impl Iterator<Item = &'a DesignRecord>) -> Option<&'a DesignRecord> {
    let mut best: Option<&DesignRecord> = None;
    for r in records {
        if best.is_none_or(|b| r.score > b.score) {
            best = Some(r);
        }
    }
    best
}

/// Inverse-CDF draw; `u` in [0,1).
fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum just below 1.
    probs.len() - 1
}
