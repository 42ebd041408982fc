//! The meta agent: plan, implement, trial-run and debug new designs, then
//! evaluate and archive them, one learning step at a time.

mod plan;
mod prompts;
mod run;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{stratified_log_sample, Archive, ArchiveDir, DesignRecord, LogEntry};
use crate::builtin::check_conformance;
use crate::environments::{PolicyAgent, TaskSpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, trial_run, write_report, Harness, Mode, TrialVerdict};
use crate::provider::{Caller, ChatMessage, CostLedger, ModelProvider, ModelRequest, ModelRole, Phase};
use crate::sandbox::{ArtifactLauncher, DesignFault, FaultKind, Sandbox};
use crate::util::{mix_seed, read_string, sha256_hex, write_json, write_string};
use crate::FORMAT_VERSION;

pub use plan::Plan;
pub use prompts::{benchmark_description, fill_template, PromptSet};
pub use run::{run_learning, LearningSetup, RunCost, RunLayout, RunOutcome, RunSummary, StepPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub steps: usize,
    pub candidates_per_step: usize,
    pub retry_budget: usize,
    /// Candidate pipelines run at once.
    pub max_parallel: usize,
    pub repeats: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Overrides the shipped description of the environment family.
    pub benchmark_description: Option<String>,
    /// Directory whose template files replace the shipped ones.
    pub prompts_dir: Option<PathBuf>,
    /// Root design artifact; the shipped null template when absent.
    pub root_design: Option<PathBuf>,
    /// No-memory score; measured before the first step when absent.
    pub baseline_score: Option<f64>,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            steps: 11,
            candidates_per_step: 5,
            retry_budget: 3,
            max_parallel: 5,
            repeats: 3,
            mode: Mode::Static,
            seed: 0,
            benchmark_description: None,
            prompts_dir: None,
            root_design: None,
            baseline_score: None,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates_per_step == 0 || self.repeats == 0 || self.max_parallel == 0 {
            return Err(Error::usage("candidates_per_step, repeats and max_parallel must be positive"));
        }
        Ok(())
    }
}

/// A design source as produced by the meta agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file_name: String,
    pub source: String,
}

/// Pulls the artifact out of a reply: the first fenced block, or the whole
/// reply. JSON blocks become `design.json`, anything else `design.py`.
pub fn extract_artifact(reply: &str) -> Artifact {
    let mut lang = "";
    let mut body = reply.trim();
    if let Some(open) = reply.find("```") {
        let after = &reply[open + 3..];
        let line_end = after.find('\n').unwrap_or(after.len());
        lang = after[..line_end].trim();
        let content = &after[(line_end + 1).min(after.len())..];
        body = content.find("```").map_or(content, |close| &content[..close]);
    }
    let is_json = match lang {
        "json" => true,
        "python" | "py" => false,
        _ => body.trim_start().starts_with('{'),
    };
    let mut source = body.trim().to_string();
    source.push('\n');
    Artifact {
        file_name: if is_json { "design.json" } else { "design.py" }.to_string(),
        source,
    }
}

/// Content address of a candidate: hash of its first artifact and parent.
pub fn candidate_id(source: &str, parent_id: Option<&str>) -> String {
    let mut bytes = source.as_bytes().to_vec();
    bytes.push(0);
    bytes.extend_from_slice(parent_id.unwrap_or("").as_bytes());
    sha256_hex(&bytes)[..16].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDesign {
    pub design_id: String,
    pub parent_id: Option<String>,
    pub plan: Plan,
    pub artifact: Artifact,
    pub debug_attempts: usize,
    pub verdict: Verdict,
}

/// Prompt assembly and model calls of the meta agent.
#[derive(Debug, Clone, Copy)]
pub struct MetaAgent<'a> {
    pub prompts: &'a PromptSet,
    pub provider: &'a ModelProvider,
    pub benchmark: &'a str,
}

fn render_logs(logs: &[LogEntry]) -> String {
    if logs.is_empty() {
        return "(no logs)\n".to_string();
    }
    let mut out = String::new();
    for (i, e) in logs.iter().enumerate() {
        out.push_str(&format!("--- log {} | task {} | feedback {} ---\n", i + 1, e.task_id, e.feedback));
        out.push_str(&format!(
            "Retrieved knowledge:\n{}\n",
            if e.knowledge.is_empty() { "(empty)" } else { &e.knowledge }
        ));
        out.push_str(&e.trajectory.render());
    }
    out
}

impl MetaAgent<'_> {
    fn ask(&self, role: ModelRole, prompt: String, tag: String) -> Result<String> {
        let request = ModelRequest::chat(role, vec![ChatMessage::user(prompt)], Caller::MetaAgent, Phase::Meta, tag);
        Ok(self.provider.complete(&request)?.0)
    }

    /// Planning prompt for a parent record and its source.
    pub fn planning_prompt(&self, record: &DesignRecord, source: &str) -> String {
        fill_template(
            &self.prompts.planning,
            &[
                ("benchmark", self.benchmark.trim()),
                ("design_source", source.trim()),
                ("success_rate", &format!("{:.4}", record.score)),
                ("logs", &render_logs(&record.log_sample)),
                ("one_shot_plan", self.prompts.one_shot_plan.trim()),
            ],
        )
    }

    /// Asks for a plan, with one reformat retry on an unusable reply.
    pub fn propose_plan(&self, record: &DesignRecord, source: &str) -> Result<Plan> {
        let id = &record.design_id;
        let reply = self.ask(ModelRole::Reasoning, self.planning_prompt(record, source), format!("plan:{id}"))?;
        let err = match Plan::parse(&reply) {
            Ok(plan) => return Ok(plan),
            Err(e) => e,
        };
        let prompt = fill_template(&self.prompts.reformat, &[("reply", &reply), ("error", &err)]);
        let retry = self.ask(ModelRole::Reasoning, prompt, format!("reformat:{id}"))?;
        Plan::parse(&retry).map_err(|e| Error::Plan(format!("plan for {id} unusable after reformat: {e}")))
    }

    pub fn implement_design(&self, plan: &Plan, parent_id: &str, parent_source: &str, trajectory_example: &str) -> Result<Artifact> {
        let prompt = fill_template(
            &self.prompts.implementation,
            &[
                ("reflection", &plan.reflection),
                ("idea", &plan.idea),
                ("trajectory_score_assessment", &plan.trajectory_score_assessment),
                ("suggested_changes", &plan.suggested_changes),
                ("parent_source", parent_source.trim()),
                ("interface_template", self.prompts.interface_template.trim()),
                ("tool_catalog", self.prompts.tool_catalog.trim()),
                ("trajectory_example", trajectory_example.trim()),
            ],
        );
        let reply = self.ask(ModelRole::Chat, prompt, format!("implement:{parent_id}"))?;
        Ok(extract_artifact(&reply))
    }

    /// Replaces the candidate's artifact with a corrected one.
    pub fn debug_candidate(&self, candidate: &mut CandidateDesign, fault: &DesignFault, retry_budget: usize) -> Result<()> {
        if candidate.debug_attempts >= retry_budget {
            return Err(Error::usage(format!("debug budget of {retry_budget} exhausted")));
        }
        let prompt = fill_template(
            &self.prompts.debugging,
            &[
                ("design_source", candidate.artifact.source.trim()),
                ("fault_report", fault.report().trim()),
                ("suggested_changes", &candidate.plan.suggested_changes),
            ],
        );
        let parent = candidate.parent_id.as_deref().unwrap_or("");
        let reply = self.ask(ModelRole::Chat, prompt, format!("debug:{parent}"))?;
        candidate.artifact = extract_artifact(&reply);
        candidate.debug_attempts += 1;
        Ok(())
    }
}

/// Everything a learning step needs besides the archive and the RNG.
#[derive(Debug)]
pub struct LearningContext<'a> {
    pub config: &'a LearningConfig,
    pub prompts: &'a PromptSet,
    pub benchmark: &'a str,
    pub provider: &'a ModelProvider,
    pub policy: &'a PolicyAgent,
    pub sandbox: &'a Sandbox,
    pub archive_dir: &'a ArchiveDir,
    /// `steps/` lives here.
    pub run_dir: &'a Path,
    pub tasks: &'a [TaskSpec],
    pub success_threshold: f64,
    /// K_f, entries kept per design.
    pub log_sample_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOutcome {
    /// Evaluated and archived as valid.
    Inserted,
    /// Archived as invalid.
    Invalid,
    /// Stopped before an artifact existed; nothing archived.
    Aborted,
    /// Same content address as an existing design; skipped.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub parent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_id: Option<String>,
    pub outcome: CandidateOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub debug_attempts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub format_version: u32,
    pub step: u64,
    pub sampled: Vec<String>,
    pub candidates: Vec<CandidateSummary>,
    pub archive_size: usize,
    pub best_design_id: String,
    pub best_score: f64,
}

struct CandidateResult {
    summary: CandidateSummary,
    record: Option<DesignRecord>,
    ledger: CostLedger,
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or("").to_string()
}

impl LearningContext<'_> {
    fn step_dir(&self, step: u64) -> PathBuf {
        self.run_dir.join("steps").join(step.to_string())
    }

    fn write_candidate_artifact(&self, id: &str, artifact: &Artifact) -> Result<String> {
        let dir = self.archive_dir.design_dir(id);
        for stale in ["design.json", "design.py"] {
            if stale != artifact.file_name {
                let _ = std::fs::remove_file(dir.join(stale));
            }
        }
        self.archive_dir.write_artifact(id, &artifact.file_name, &artifact.source)
    }

    /// Runs plan → implement → trial/debug → evaluate for one parent.
    fn run_candidate(&self, parent: &DesignRecord, existing: &HashSet<String>, step: u64, index: usize, seed: u64) -> CandidateResult {
        let provider = self.provider.with_fresh_ledger();
        let agent = MetaAgent {
            prompts: self.prompts,
            provider: &provider,
            benchmark: self.benchmark,
        };
        let mut log = String::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let summary = self.candidate_pipeline(&agent, parent, existing, step, &mut rng, &mut log);
        let (summary, record) = match summary {
            Ok(pair) => pair,
            Err(err) => (
                CandidateSummary {
                    parent_id: parent.design_id.clone(),
                    design_id: None,
                    outcome: CandidateOutcome::Aborted,
                    score: None,
                    debug_attempts: 0,
                    note: Some(err.to_string()),
                },
                None,
            ),
        };
        let dir_name = summary.design_id.clone().unwrap_or_else(|| format!("aborted-{index}"));
        let dir = self.step_dir(step).join("candidates").join(dir_name);
        let _ = write_string(&dir.join("transcript.log"), &log);
        CandidateResult {
            summary,
            record,
            ledger: provider.ledger(),
        }
    }

    fn candidate_pipeline(
        &self,
        agent: &MetaAgent<'_>,
        parent: &DesignRecord,
        existing: &HashSet<String>,
        step: u64,
        rng: &mut ChaCha8Rng,
        log: &mut String,
    ) -> Result<(CandidateSummary, Option<DesignRecord>)> {
        let parent_source = read_string(&self.archive_dir.resolve(&parent.artifact_ref))?;
        let plan = agent.propose_plan(parent, &parent_source)?;
        log.push_str(&format!("== plan ==\n{}\n", serde_json::to_string_pretty(&plan)?));
        let example = parent
            .log_sample
            .first()
            .map_or_else(|| "(none)".to_string(), |e| e.trajectory.render());
        let artifact = agent.implement_design(&plan, &parent.design_id, &parent_source, &example)?;
        log.push_str(&format!("== artifact {} ==\n{}", artifact.file_name, artifact.source));
        let id = candidate_id(&artifact.source, Some(&parent.design_id));
        let cand_dir = self.step_dir(step).join("candidates").join(&id);
        write_json(&cand_dir.join("plan.json"), &plan)?;
        let mut summary = CandidateSummary {
            parent_id: parent.design_id.clone(),
            design_id: Some(id.clone()),
            outcome: CandidateOutcome::Invalid,
            score: None,
            debug_attempts: 0,
            note: None,
        };
        if existing.contains(&id) {
            summary.outcome = CandidateOutcome::Duplicate;
            summary.note = Some(format!("design {id} is already archived"));
            return Ok((summary, None));
        }
        let mut candidate = CandidateDesign {
            design_id: id.clone(),
            parent_id: Some(parent.design_id.clone()),
            plan,
            artifact,
            debug_attempts: 0,
            verdict: Verdict::Failed,
        };
        let harness = Harness::new(self.policy, agent.provider);
        let mut artifact_ref = self.write_candidate_artifact(&id, &candidate.artifact)?;
        let mut last_fault: Option<DesignFault>;
        loop {
            last_fault = match check_conformance(&candidate.artifact.file_name, &candidate.artifact.source) {
                Err(detail) => Some(DesignFault::new(&id, FaultKind::Conformance, detail)),
                Ok(()) => {
                    let launcher = ArtifactLauncher::new(self.sandbox, id.clone(), self.archive_dir.resolve(&artifact_ref));
                    match trial_run(&harness, &launcher, self.tasks, rng)?.verdict {
                        TrialVerdict::Pass => None,
                        TrialVerdict::Fail { fault } => Some(fault),
                    }
                }
            };
            let Some(fault) = &last_fault else {
                candidate.verdict = Verdict::Passed;
                break;
            };
            log.push_str(&format!("== trial failed (attempt {}) ==\n{}", candidate.debug_attempts, fault.report()));
            if candidate.debug_attempts >= self.config.retry_budget {
                break;
            }
            agent.debug_candidate(&mut candidate, fault, self.config.retry_budget)?;
            log.push_str(&format!("== debugged artifact {} ==\n{}", candidate.artifact.file_name, candidate.artifact.source));
            artifact_ref = self.write_candidate_artifact(&id, &candidate.artifact)?;
        }
        summary.debug_attempts = candidate.debug_attempts;
        let parent_id = Some(parent.design_id.clone());
        if candidate.verdict == Verdict::Failed {
            let fault = last_fault.expect("failed candidates carry a fault");
            let note = format!("trial run failed after {} debug attempts: {}", candidate.debug_attempts, first_line(&fault.to_string()));
            summary.note = Some(note.clone());
            return Ok((summary, Some(DesignRecord::invalid(id, parent_id, artifact_ref, note))));
        }
        let launcher = ArtifactLauncher::new(self.sandbox, id.clone(), self.archive_dir.resolve(&artifact_ref));
        match evaluate(&harness, &launcher, self.tasks, self.config.mode, self.config.repeats) {
            Ok(report) => {
                write_report(&cand_dir, &report)?;
                let logs = stratified_log_sample(
                    &report.log_entries(),
                    self.log_sample_size,
                    rng,
                    self.success_threshold,
                );
                summary.outcome = CandidateOutcome::Inserted;
                summary.score = Some(report.mean_score);
                Ok((summary, Some(DesignRecord::valid(id, parent_id, artifact_ref, report.mean_score, logs))))
            }
            Err(Error::Design(fault)) => {
                log.push_str(&format!("== evaluation fault ==\n{}", fault.report()));
                let note = format!("collection phase fault: {}", first_line(&fault.to_string()));
                summary.note = Some(note.clone());
                Ok((summary, Some(DesignRecord::invalid(id, parent_id, artifact_ref, note))))
            }
            Err(other) => Err(other),
        }
    }
}

/// One iteration of the search: sample parents, bump their visit counts,
/// refine each in parallel, then archive the results in sample order.
pub fn learning_step<R: RngCore>(ctx: &LearningContext<'_>, archive: &mut Archive, rng: &mut R) -> Result<StepSummary> {
    let step = archive.step_counter + 1;
    let parents: Vec<DesignRecord> = archive
        .sample_designs(ctx.config.candidates_per_step, rng)?
        .into_iter()
        .cloned()
        .collect();
    let sampled: Vec<String> = parents.iter().map(|p| p.design_id.clone()).collect();
    archive.increment_visits(&sampled)?;
    let step_seed = rng.next_u64();
    let existing: HashSet<String> = archive.records().iter().map(|r| r.design_id.clone()).collect();
    let seeds: Vec<u64> = (0..parents.len()).map(|i| mix_seed(step_seed, i as u64)).collect();

    let mut results: Vec<CandidateResult> = Vec::with_capacity(parents.len());
    for chunk in parents.iter().enumerate().collect::<Vec<_>>().chunks(ctx.config.max_parallel) {
        let batch: Vec<CandidateResult> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&(i, parent)| {
                    let seed = seeds[i];
                    let existing = &existing;
                    scope.spawn(move || ctx.run_candidate(parent, existing, step, i, seed))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("candidate thread panicked")).collect()
        });
        results.extend(batch);
    }

    let mut summaries = Vec::with_capacity(results.len());
    for result in results {
        ctx.provider.absorb(&result.ledger);
        let mut summary = result.summary;
        if let Some(record) = result.record {
            if archive.contains(&record.design_id) {
                summary.outcome = CandidateOutcome::Duplicate;
                summary.note = Some(format!("design {} is already archived", record.design_id));
            } else {
                archive.insert(record)?;
            }
        }
        summaries.push(summary);
    }
    archive.step_counter = step;
    ctx.archive_dir.save(archive)?;
    let best = archive.best_design()?;
    let summary = StepSummary {
        format_version: FORMAT_VERSION,
        step,
        sampled,
        candidates: summaries,
        archive_size: archive.len(),
        best_design_id: best.design_id.clone(),
        best_score: best.score,
    };
    write_json(&ctx.step_dir(step).join("step.json"), &summary)?;
    Ok(summary)
}
