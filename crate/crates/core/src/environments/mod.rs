//! Deterministic text environments and the policy rollout loop.
//!
//! External benchmarks plug in by implementing [`Environment`]:
//! `reset(seed) -> {observation, goal}` and `step(action) -> {observation,
//! done}` plus a `score` for the trajectory so far. [`EnvInstance`] wraps an
//! environment with the step limit and truncation handling.

mod families;
mod hintgate;
mod keydoor;
mod policy;
mod recipe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{fnv1a, mix_seed};

pub use families::{FamilySpec, GateVariant};
pub use hintgate::{hint_sentence, GateLayout, HintGate};
pub use keydoor::{KeyDoor, Layout as KeydoorLayout};
pub use policy::{rollout, ChatPolicy, PolicyAgent, PromptContext, ScriptedPolicy, KNOWLEDGE_HEADER};
pub use recipe::Recipe;

pub const FAMILIES: &[&str] = &["keydoor", "recipe", "hintgate"];

/// One environment instance to solve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub environment_family: String,
    pub seed: u64,
    pub description: String,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub observation: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub goal: String,
    pub steps: Vec<Step>,
    /// Observation returned by the last action.
    pub final_observation: String,
    pub feedback: f64,
    /// Step limit hit before the episode ended on its own.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl Trajectory {
    /// Plain-text transcript used in prompts and by text-keyed designs.
    pub fn render(&self) -> String {
        let mut out = format!("Task: {}\n", self.goal);
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("[{}] {}\n> {}\n", i + 1, s.observation, s.action));
        }
        out.push_str(&format!("[end] {}\nfeedback: {}\n", self.final_observation, self.feedback));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reset {
    pub observation: String,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub observation: String,
    pub done: bool,
}

/// Adapter surface for a text environment.
pub trait Environment: Send {
    fn reset(&mut self, seed: u64) -> Reset;
    fn step(&mut self, action: &str) -> Transition;
    /// Feedback for the trajectory so far, in [0,1].
    fn score(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: String,
    pub done: bool,
    pub score_if_done: Option<f64>,
    pub truncated: bool,
}

pub struct EnvInstance {
    pub family: String,
    pub seed: u64,
    pub max_steps: usize,
    step_count: usize,
    done: bool,
    initial: Reset,
    env: Box<dyn Environment>,
}

impl std::fmt::Debug for EnvInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvInstance")
            .field("family", &self.family)
            .field("seed", &self.seed)
            .field("step_count", &self.step_count)
            .field("max_steps", &self.max_steps)
            .field("done", &self.done)
            .finish()
    }
}

impl EnvInstance {
    pub fn new(family: impl Into<String>, seed: u64, max_steps: usize, mut env: Box<dyn Environment>) -> Self {
        let initial = env.reset(seed);
        Self {
            family: family.into(),
            seed,
            max_steps,
            step_count: 0,
            done: false,
            initial,
            env,
        }
    }

    pub fn initial(&self) -> &Reset {
        &self.initial
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: &str) -> Result<StepResult> {
        if self.done {
            return Err(Error::usage(format!("{}#{} is already done", self.family, self.seed)));
        }
        let t = self.env.step(action);
        self.step_count += 1;
        let truncated = !t.done && self.step_count >= self.max_steps;
        self.done = t.done || truncated;
        Ok(StepResult {
            observation: t.observation,
            done: self.done,
            score_if_done: self.done.then(|| self.env.score()),
            truncated,
        })
    }

    pub fn score(&self) -> f64 {
        self.env.score()
    }
}

pub(crate) fn family_rng(family: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(fnv1a(family.as_bytes()), seed))
}

pub fn family_spec(family: &str) -> Result<FamilySpec> {
    FamilySpec::builtin(family).ok_or_else(|| Error::usage(format!("unknown environment family {family:?}")))
}

pub fn make_env(family: &str, seed: u64) -> Result<EnvInstance> {
    let spec = family_spec(family)?;
    let env: Box<dyn Environment> = match family {
        "keydoor" => Box::new(KeyDoor::new(spec.clone())),
        "recipe" => Box::new(Recipe::new(spec.clone())),
        "hintgate" => Box::new(HintGate::new(spec.clone())),
        _ => unreachable!("family_spec accepted {family}"),
    };
    Ok(EnvInstance::new(family, seed, spec.max_steps, env))
}

/// `count` tasks with seeds `base_seed..base_seed + count`.
pub fn task_set(family: &str, count: usize, base_seed: u64) -> Result<Vec<TaskSpec>> {
    (0..count as u64)
        .map(|i| {
            let seed = base_seed + i;
            let env = make_env(family, seed)?;
            Ok(TaskSpec {
                task_id: format!("{family}-{seed}"),
                environment_family: family.to_string(),
                seed,
                description: env.initial().goal.clone(),
                max_steps: env.max_steps,
            })
        })
        .collect()
}

pub fn make_task_env(task: &TaskSpec) -> Result<EnvInstance> {
    let mut env = make_env(&task.environment_family, task.seed)?;
    env.max_steps = task.max_steps;
    Ok(env)
}

/// Default success threshold for stratified sampling: binary families count
/// only full successes.
pub fn success_threshold(family: &str) -> f64 {
    match family_spec(family) {
        Ok(spec) if !spec.binary => 0.5,
        _ => 1.0,
    }
}

// Shared parsing helpers for the grid families.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dir {
    North,
    South,
    East,
    West,
}

impl Dir {
    pub(crate) fn delta(self) -> (i64, i64) {
        match self {
            Dir::North => (-1, 0),
            Dir::South => (1, 0),
            Dir::East => (0, 1),
            Dir::West => (0, -1),
        }
    }

    pub(crate) fn word(self) -> &'static str {
        match self {
            Dir::North => "north",
            Dir::South => "south",
            Dir::East => "east",
            Dir::West => "west",
        }
    }
}

pub(crate) fn normalize_action(action: &str) -> String {
    action
        .trim()
        .trim_end_matches('.')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub(crate) fn parse_move(action: &str) -> Option<Dir> {
    let dir = action.strip_prefix("go ").unwrap_or(action);
    match dir {
        "north" => Some(Dir::North),
        "south" => Some(Dir::South),
        "east" => Some(Dir::East),
        "west" => Some(Dir::West),
        _ => None,
    }
}

pub(crate) const NOTHING_HAPPENS: &str = "Nothing happens.";

/// Manhattan walk, rows first.
pub(crate) fn walk(from: (usize, usize), to: (usize, usize)) -> Vec<String> {
    let mut moves = Vec::new();
    let (fr, fc) = (from.0 as i64, from.1 as i64);
    let (tr, tc) = (to.0 as i64, to.1 as i64);
    let vertical = if tr > fr { Dir::South } else { Dir::North };
    let horizontal = if tc > fc { Dir::East } else { Dir::West };
    for _ in 0..(tr - fr).abs() {
        moves.push(format!("go {}", vertical.word()));
    }
    for _ in 0..(tc - fc).abs() {
        moves.push(format!("go {}", horizontal.word()));
    }
    moves
}

/// Finds `<label> row R, col C` and returns `(R, C)`.
pub(crate) fn find_cell(text: &str, label: &str) -> Option<(usize, usize)> {
    let start = text.find(label)? + label.len();
    let rest = text[start..].trim_start().strip_prefix("row ")?;
    let (row, rest) = rest.split_once(',')?;
    let rest = rest.trim_start().strip_prefix("col ")?;
    let col: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    Some((row.trim().parse().ok()?, col.parse().ok()?))
}
