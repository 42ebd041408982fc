//! Two-phase evaluation: memory-free collection with sequential updates,
//! then deployment with retrieval in static or dynamic mode.

mod report;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::archive::LogEntry;
use crate::environments::{make_task_env, rollout, PolicyAgent, TaskSpec, Trajectory};
use crate::error::{Error, Result};
use crate::provider::{ModelProvider, Phase, TokenScheme};
use crate::sandbox::{DesignFault, DesignLauncher, DesignSession, TaskState};

pub use report::{mean, standard_error, write_report, CostReport, EvaluationReport};

pub const DEFAULT_REPEATS: usize = 3;
pub const TRIAL_TASKS: usize = 5;
pub const TRIAL_COLLECTION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Static,
    Dynamic,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "dynamic" => Ok(Mode::Dynamic),
            _ => Err(Error::usage(format!("unknown mode {s:?} (expected static or dynamic)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Static => "static",
            Mode::Dynamic => "dynamic",
        })
    }
}

/// A non-fatal fault observed during deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFault {
    pub repeat: usize,
    pub task_id: String,
    /// `retrieve`, `update` or `restore`.
    pub operation: String,
    pub detail: String,
    #[serde(skip)]
    pub fault: Option<DesignFault>,
}

/// The fixed parts of an evaluation: who acts and who pays.
#[derive(Debug, Clone, Copy)]
pub struct Harness<'a> {
    pub policy: &'a PolicyAgent,
    pub provider: &'a ModelProvider,
    pub scheme: TokenScheme,
}

impl<'a> Harness<'a> {
    pub fn new(policy: &'a PolicyAgent, provider: &'a ModelProvider) -> Self {
        Self {
            policy,
            provider,
            scheme: provider.scheme(),
        }
    }

    fn play(&self, task: &TaskSpec, knowledge: &str, phase: Phase) -> Result<Trajectory> {
        let mut env = make_task_env(task)?;
        Ok(rollout(&mut env, &task.task_id, self.policy, knowledge, self.provider, phase))
    }
}

/// Deployment results before aggregation.
#[derive(Debug, Clone, Default)]
pub struct Deployment {
    /// One list of log entries per repeat, in task order.
    pub per_task: Vec<Vec<LogEntry>>,
    pub faults: Vec<EvalFault>,
    /// Token count of every retrieved knowledge string, in retrieval order.
    pub retrieved_tokens: Vec<usize>,
}

fn design_fault(err: Error) -> std::result::Result<DesignFault, Error> {
    match err {
        Error::Design(fault) => Ok(*fault),
        other => Err(other),
    }
}

fn task_state(task: &TaskSpec) -> Result<TaskState> {
    let env = make_task_env(task)?;
    Ok(TaskState {
        goal: env.initial().goal.clone(),
        observation: env.initial().observation.clone(),
    })
}

/// First ⌊n/2⌋ tasks collect, the rest deploy.
pub fn split_tasks(tasks: &[TaskSpec]) -> Result<(Vec<TaskSpec>, Vec<TaskSpec>)> {
    if tasks.len() < 2 {
        return Err(Error::usage(format!("need at least 2 tasks to split, got {}", tasks.len())));
    }
    let (c, d) = tasks.split_at(tasks.len() / 2);
    Ok((c.to_vec(), d.to_vec()))
}

/// Memory-free rollouts, each followed by one update, strictly in order.
pub fn run_collection_phase(
    harness: &Harness<'_>,
    collection: &[TaskSpec],
    design: &mut dyn DesignSession,
) -> Result<Vec<Trajectory>> {
    design.set_phase(Phase::Collection);
    let mut trajectories = Vec::with_capacity(collection.len());
    for task in collection {
        let trajectory = harness.play(task, "", Phase::Collection)?;
        design.update(&trajectory, trajectory.feedback)?;
        trajectories.push(trajectory);
    }
    Ok(trajectories)
}

fn retrieve_or_empty(
    harness: &Harness<'_>,
    design: &mut dyn DesignSession,
    task: &TaskSpec,
    repeat: usize,
    out: &mut Deployment,
) -> Result<String> {
    match design.retrieve(&task_state(task)?) {
        Ok(text) => {
            out.retrieved_tokens.push(harness.scheme.count(&text));
            Ok(text)
        }
        Err(err) => {
            let fault = design_fault(err)?;
            out.faults.push(EvalFault {
                repeat,
                task_id: task.task_id.clone(),
                operation: "retrieve".into(),
                detail: fault.to_string(),
                fault: Some(fault),
            });
            out.retrieved_tokens.push(0);
            Ok(String::new())
        }
    }
}

fn log_entry(task: &TaskSpec, knowledge: String, trajectory: Trajectory) -> LogEntry {
    LogEntry {
        task_id: task.task_id.clone(),
        knowledge,
        feedback: trajectory.feedback,
        trajectory,
    }
}

/// Retrieve then roll out, memory frozen.
pub fn run_deployment_static(
    harness: &Harness<'_>,
    deployment: &[TaskSpec],
    design: &mut dyn DesignSession,
    repeats: usize,
) -> Result<Deployment> {
    if repeats == 0 {
        return Err(Error::usage("repeats must be positive"));
    }
    design.set_phase(Phase::Deployment);
    let mut out = Deployment::default();
    for repeat in 0..repeats {
        let mut entries = Vec::with_capacity(deployment.len());
        for task in deployment {
            let knowledge = retrieve_or_empty(harness, design, task, repeat, &mut out)?;
            let trajectory = harness.play(task, &knowledge, Phase::Deployment)?;
            entries.push(log_entry(task, knowledge, trajectory));
        }
        out.per_task.push(entries);
    }
    Ok(out)
}

/// Retrieve, roll out, update. Every repeat starts from the post-collection
/// state: restored from a snapshot when the design supports it, otherwise
/// rebuilt by `recollect`.
pub fn run_deployment_dynamic(
    harness: &Harness<'_>,
    deployment: &[TaskSpec],
    design: &mut dyn DesignSession,
    repeats: usize,
    recollect: &mut dyn FnMut() -> Result<Box<dyn DesignSession>>,
) -> Result<Deployment> {
    if repeats == 0 {
        return Err(Error::usage("repeats must be positive"));
    }
    let snapshot = if repeats > 1 { design.snapshot()? } else { None };
    let mut out = Deployment::default();
    let mut fresh: Option<Box<dyn DesignSession>> = None;
    for repeat in 0..repeats {
        let session: &mut dyn DesignSession = if repeat == 0 {
            &mut *design
        } else if let Some(id) = &snapshot {
            design.restore(id)?;
            &mut *design
        } else {
            fresh = Some(recollect()?);
            fresh.as_deref_mut().expect("just set")
        };
        session.set_phase(Phase::Deployment);
        let mut updating = true;
        let mut entries = Vec::with_capacity(deployment.len());
        for task in deployment {
            let knowledge = retrieve_or_empty(harness, session, task, repeat, &mut out)?;
            let trajectory = harness.play(task, &knowledge, Phase::Deployment)?;
            if updating {
                if let Err(err) = session.update(&trajectory, trajectory.feedback) {
                    let fault = design_fault(err)?;
                    out.faults.push(EvalFault {
                        repeat,
                        task_id: task.task_id.clone(),
                        operation: "update".into(),
                        detail: fault.to_string(),
                        fault: Some(fault),
                    });
                    updating = false;
                }
            }
            entries.push(log_entry(task, knowledge, trajectory));
        }
        out.per_task.push(entries);
    }
    drop(fresh);
    Ok(out)
}

/// Full two-phase evaluation of one design. Model usage is recorded in a
/// ledger of its own, reported, and then merged into `harness.provider`.
/// A fault during collection is returned as an error: the memory is then
/// undefined and the design counts as invalid.
pub fn evaluate(
    harness: &Harness<'_>,
    launcher: &dyn DesignLauncher,
    tasks: &[TaskSpec],
    mode: Mode,
    repeats: usize,
) -> Result<EvaluationReport> {
    let (collection, deployment) = split_tasks(tasks)?;
    evaluate_split(harness, launcher, &collection, &deployment, mode, repeats)
}

/// As [`evaluate`] with an explicit split.
pub fn evaluate_split(
    harness: &Harness<'_>,
    launcher: &dyn DesignLauncher,
    collection: &[TaskSpec],
    deployment: &[TaskSpec],
    mode: Mode,
    repeats: usize,
) -> Result<EvaluationReport> {
    if deployment.is_empty() {
        return Err(Error::usage("deployment split is empty"));
    }
    let provider = harness.provider.with_fresh_ledger();
    let local = Harness {
        provider: &provider,
        ..*harness
    };
    let result = (|| {
        let mut session = launcher.launch(&provider)?;
        run_collection_phase(&local, collection, session.as_mut())?;
        match mode {
            Mode::Static => run_deployment_static(&local, deployment, session.as_mut(), repeats),
            Mode::Dynamic => {
                let mut recollect = || -> Result<Box<dyn DesignSession>> {
                    let mut s = launcher.launch(&provider)?;
                    run_collection_phase(&local, collection, s.as_mut())?;
                    Ok(s)
                };
                run_deployment_dynamic(&local, deployment, session.as_mut(), repeats, &mut recollect)
            }
        }
    })();
    let ledger = provider.ledger();
    harness.provider.absorb(&ledger);
    let outcome = result?;
    Ok(EvaluationReport::build(
        launcher.design_id(),
        mode,
        repeats,
        collection,
        deployment,
        outcome,
        ledger,
        harness.scheme,
    ))
}

/// Session with no memory at all: update ignores, retrieve returns "".
#[derive(Debug, Clone, Default)]
pub struct NoMemory;

pub const NO_MEMORY_ID: &str = "no-memory";

impl DesignSession for NoMemory {
    fn design_id(&self) -> &str {
        NO_MEMORY_ID
    }
    fn set_phase(&mut self, _phase: Phase) {}
    fn update(&mut self, _trajectory: &Trajectory, _feedback: f64) -> Result<()> {
        Ok(())
    }
    fn retrieve(&mut self, _state: &TaskState) -> Result<String> {
        Ok(String::new())
    }
    fn snapshot(&mut self) -> Result<Option<String>> {
        Ok(Some("none".into()))
    }
    fn restore(&mut self, _snapshot_id: &str) -> Result<()> {
        Ok(())
    }
    fn transcript(&self) -> Vec<String> {
        Vec::new()
    }
}

impl DesignLauncher for NoMemory {
    fn design_id(&self) -> &str {
        NO_MEMORY_ID
    }
    fn launch(&self, _provider: &ModelProvider) -> Result<Box<dyn DesignSession>> {
        Ok(Box::new(NoMemory))
    }
}

/// Deployment score of the memory-free agent (f0).
pub fn no_memory_run(harness: &Harness<'_>, tasks: &[TaskSpec], repeats: usize) -> Result<EvaluationReport> {
    evaluate(harness, &NoMemory, tasks, Mode::Static, repeats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TrialVerdict {
    Pass,
    Fail { fault: DesignFault },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub collection: Vec<String>,
    pub deployment: Vec<String>,
    #[serde(flatten)]
    pub verdict: TrialVerdict,
}

impl TrialOutcome {
    pub fn passed(&self) -> bool {
        self.verdict == TrialVerdict::Pass
    }
}

/// Executability check on 5 sampled tasks: 2 collect, 3 deploy statically
/// once. Scores are discarded; any wire-level fault fails the trial.
pub fn trial_run<R: RngCore + ?Sized>(
    harness: &Harness<'_>,
    launcher: &dyn DesignLauncher,
    learning_tasks: &[TaskSpec],
    rng: &mut R,
) -> Result<TrialOutcome> {
    if learning_tasks.len() < TRIAL_TASKS {
        return Err(Error::usage(format!(
            "trial run needs {TRIAL_TASKS} learning tasks, got {}",
            learning_tasks.len()
        )));
    }
    let picked: Vec<TaskSpec> = rand::seq::index::sample(rng, learning_tasks.len(), TRIAL_TASKS)
        .into_iter()
        .map(|i| learning_tasks[i].clone())
        .collect();
    let (collection, deployment) = picked.split_at(TRIAL_COLLECTION);
    let ids = |ts: &[TaskSpec]| ts.iter().map(|t| t.task_id.clone()).collect::<Vec<_>>();
    let verdict = match trial_inner(harness, launcher, collection, deployment) {
        Ok(None) => TrialVerdict::Pass,
        Ok(Some(fault)) => TrialVerdict::Fail { fault },
        Err(err) => TrialVerdict::Fail {
            fault: design_fault(err)?,
        },
    };
    Ok(TrialOutcome {
        collection: ids(collection),
        deployment: ids(deployment),
        verdict,
    })
}

fn trial_inner(
    harness: &Harness<'_>,
    launcher: &dyn DesignLauncher,
    collection: &[TaskSpec],
    deployment: &[TaskSpec],
) -> Result<Option<DesignFault>> {
    let mut session = launcher.launch(harness.provider)?;
    run_collection_phase(harness, collection, session.as_mut())?;
    let out = run_deployment_static(harness, deployment, session.as_mut(), 1)?;
    Ok(out.faults.into_iter().find_map(|f| f.fault))
}
