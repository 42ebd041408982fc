use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{benchmark_description, candidate_id, learning_step, LearningConfig, LearningContext, PromptSet, StepSummary};
use crate::archive::{export_tree, stratified_log_sample, Archive, ArchiveDir, DesignRecord, SamplingParams, Strategy};
use crate::builtin;
use crate::environments::{PolicyAgent, TaskSpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, no_memory_run, write_report, Harness};
use crate::provider::{end_to_end_memory_cost, Caller, ModelProvider};
use crate::sandbox::{ArtifactLauncher, RuntimeConfig, Sandbox, SandboxLimits};
use crate::util::{read_string, write_json, write_string};
use crate::FORMAT_VERSION;

/// Paths inside `runs/<run_id>/`.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn archive(&self) -> PathBuf {
        self.root.join("archive")
    }
    pub fn sandbox(&self) -> PathBuf {
        self.root.join("sandbox")
    }
    pub fn baseline(&self) -> PathBuf {
        self.root.join("baseline")
    }
    pub fn step(&self, n: u64) -> PathBuf {
        self.root.join("steps").join(n.to_string())
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

/// One point of the step-wise progress curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPoint {
    pub step: u64,
    pub archive_size: usize,
    pub best_design_id: String,
    pub best_score: f64,
    /// Best score among designs added in this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCost {
    pub meta_agent_micros: u64,
    pub policy_micros: u64,
    pub memory_design_micros: u64,
    pub end_to_end_memory_cost_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub strategy: Strategy,
    pub baseline_score: f64,
    pub root_design_id: String,
    pub best_design_id: String,
    pub best_score: f64,
    pub archive_size: usize,
    pub steps: Vec<StepPoint>,
    pub cost: RunCost,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: Archive,
    pub best: DesignRecord,
    pub summary: RunSummary,
    pub steps: Vec<StepSummary>,
}

/// Inputs of a learning run.
#[derive(Debug, Clone)]
pub struct LearningSetup<'a> {
    pub learning: &'a LearningConfig,
    pub sampling: SamplingParams,
    pub family: &'a str,
    pub tasks: &'a [TaskSpec],
    pub provider: &'a ModelProvider,
    pub policy: &'a PolicyAgent,
    pub runtime: RuntimeConfig,
    pub limits: SandboxLimits,
}

fn root_artifact(path: Option<&Path>) -> Result<(String, String)> {
    match path {
        None => Ok(("design.json".into(), builtin::shipped("null").expect("null design ships").to_string())),
        Some(p) => {
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Config(format!("bad root design path {}", p.display())))?;
            let file_name = if name.ends_with(".py") { "design.py" } else { "design.json" };
            let source = read_string(p)?;
            builtin::check_conformance(file_name, &source)
                .map_err(|e| Error::Config(format!("root design {}: {e}", p.display())))?;
            Ok((file_name.into(), source))
        }
    }
}

/// Measures f0 if needed, seeds the archive with the root design, runs the
/// configured number of steps and writes the summary and tree exports.
pub fn run_learning(setup: &LearningSetup<'_>, layout: &RunLayout) -> Result<RunOutcome> {
    let config = setup.learning;
    config.validate()?;
    setup.sampling.validate()?;
    let prompts = match &config.prompts_dir {
        Some(dir) => PromptSet::load(dir)?,
        None => PromptSet::default(),
    };
    let benchmark = config
        .benchmark_description
        .clone()
        .or_else(|| benchmark_description(setup.family).map(str::to_string))
        .unwrap_or_default();
    let sandbox = Sandbox::new(layout.sandbox(), setup.runtime.clone(), setup.limits);
    let harness = Harness::new(setup.policy, setup.provider);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let baseline_score = match config.baseline_score {
        Some(f0) => f0,
        None => {
            let report = no_memory_run(&harness, setup.tasks, config.repeats)?;
            write_report(&layout.baseline(), &report)?;
            report.mean_score
        }
    };
    let mut params = setup.sampling.clone();
    params.baseline_score = baseline_score;
    let mut archive = Archive::new(params);
    let archive_dir = ArchiveDir::new(layout.archive());

    let (file_name, source) = root_artifact(config.root_design.as_deref())?;
    let root_id = candidate_id(&source, None);
    let artifact_ref = archive_dir.write_artifact(&root_id, &file_name, &source)?;
    let launcher = ArtifactLauncher::new(&sandbox, root_id.clone(), archive_dir.resolve(&artifact_ref));
    let report = evaluate(&harness, &launcher, setup.tasks, config.mode, config.repeats)?;
    write_report(&layout.step(0).join("candidates").join(&root_id), &report)?;
    let threshold = crate::environments::success_threshold(setup.family);
    let logs = stratified_log_sample(&report.log_entries(), archive.params.log_sample_size, &mut rng, threshold);
    archive.insert(DesignRecord::valid(root_id.clone(), None, artifact_ref, report.mean_score, logs))?;
    archive_dir.save(&archive)?;

    let ctx = LearningContext {
        config,
        prompts: &prompts,
        benchmark: &benchmark,
        provider: setup.provider,
        policy: setup.policy,
        sandbox: &sandbox,
        archive_dir: &archive_dir,
        run_dir: &layout.root,
        tasks: setup.tasks,
        success_threshold: threshold,
        log_sample_size: archive.params.log_sample_size,
    };
    let mut steps = Vec::with_capacity(config.steps);
    let mut points = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let step = learning_step(&ctx, &mut archive, &mut rng)?;
        points.push(StepPoint {
            step: step.step,
            archive_size: step.archive_size,
            best_design_id: step.best_design_id.clone(),
            best_score: step.best_score,
            step_best_score: step.candidates.iter().filter_map(|c| c.score).reduce(f64::max),
        });
        steps.push(step);
    }

    let best = archive.best_design()?.clone();
    let ledger = setup.provider.ledger();
    let summary = RunSummary {
        format_version: FORMAT_VERSION,
        strategy: archive.params.strategy,
        baseline_score,
        root_design_id: root_id,
        best_design_id: best.design_id.clone(),
        best_score: best.score,
        archive_size: archive.len(),
        steps: points,
        cost: RunCost {
            meta_agent_micros: ledger.total_for(Caller::MetaAgent).cost_micros,
            policy_micros: ledger.total_for(Caller::Policy).cost_micros,
            memory_design_micros: ledger.total_for(Caller::MemoryDesign).cost_micros,
            end_to_end_memory_cost_micros: end_to_end_memory_cost(&ledger),
        },
    };
    write_json(&layout.summary(), &summary)?;
    let tree = export_tree(&archive);
    write_json(&layout.root.join("tree.json"), &tree)?;
    write_string(&layout.root.join("tree.dot"), &tree.to_dot())?;
    write_string(&layout.root.join("ledger.jsonl"), &ledger.to_jsonl())?;
    Ok(RunOutcome {
        archive,
        best,
        summary,
        steps,
    })
}
