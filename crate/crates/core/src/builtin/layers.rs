use serde::{Deserialize, Serialize};
use serde_json::json;

use super::host::ModelAccess;
use super::{Embedder, LayerKind, LayerSpec, Misbehavior, Operation};
use crate::environments::Trajectory;
use crate::meta::fill_template;
use crate::provider::{cosine, hash_embed, ChatMessage, EMBEDDING_DIM};
use crate::sandbox::TaskState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HintEntry {
    key: String,
    hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Episode {
    key: String,
    vector: Vec<f64>,
    text: String,
}

/// Everything a layer stores; this is what snapshots persist.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "store", rename_all = "snake_case")]
enum Store {
    #[default]
    Empty,
    Order { task_ids: Vec<String> },
    Hints { entries: Vec<HintEntry> },
    Episodes { entries: Vec<Episode> },
    Sheet { text: String },
}

/// A layer's configuration plus its live store.
#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    store: Store,
    triggers: usize,
}

/// First hint sentence in `text`, through its closing `'.`.
pub fn extract_hint(text: &str) -> Option<String> {
    let start = text.find("HINT:")?;
    let rest = &text[start..];
    let end = match rest.find("'.") {
        Some(i) => i + 2,
        None => rest.find('\n').unwrap_or(rest.len()),
    };
    Some(rest[..end].trim().to_string())
}

fn goal_key(goal: &str) -> String {
    goal.chars().filter(|c| !c.is_ascii_digit()).collect()
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Self {
        let store = match spec.kind {
            LayerKind::Recorder => Store::Order { task_ids: Vec::new() },
            LayerKind::HintRecorder { .. } => Store::Hints { entries: Vec::new() },
            LayerKind::TrajectoryStore { .. } => Store::Episodes { entries: Vec::new() },
            LayerKind::Cheatsheet { .. } => Store::Sheet { text: String::new() },
            _ => Store::Empty,
        };
        Self {
            spec,
            store,
            triggers: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn state(&self) -> serde_json::Value {
        serde_json::to_value(&self.store).expect("store serializes")
    }

    pub fn set_state(&mut self, value: serde_json::Value) -> Result<(), String> {
        self.store = serde_json::from_value(value).map_err(|e| format!("layer {}: bad stored state: {e}", self.spec.name))?;
        Ok(())
    }

    /// Misbehavior due on this occurrence of `op`, counting occurrences.
    pub fn misbehavior(&mut self, op: Operation) -> Option<(Misbehavior, String)> {
        let LayerKind::Misbehave {
            on,
            after,
            action,
            message,
        } = &self.spec.kind
        else {
            return None;
        };
        if *on != op {
            return None;
        }
        self.triggers += 1;
        (self.triggers > *after).then(|| (*action, message.clone()))
    }

    pub fn delay_ms(&self, op: Operation) -> Option<u64> {
        match self.spec.kind {
            LayerKind::Sleep { on, ms } if on == op => Some(ms),
            _ => None,
        }
    }

    fn embed(&self, embedder: Embedder, text: &str, model: &mut dyn ModelAccess) -> Result<Vec<f64>, String> {
        match embedder {
            Embedder::Hash => Ok(hash_embed(text, EMBEDDING_DIM)),
            Embedder::Model => model
                .embed(vec![text.to_string()])?
                .pop()
                .ok_or_else(|| "embedding call returned no vector".to_string()),
        }
    }

    pub fn update(&mut self, trajectory: &Trajectory, feedback: f64, model: &mut dyn ModelAccess) -> Result<(), String> {
        match (&self.spec.kind, &mut self.store) {
            (LayerKind::Recorder, Store::Order { task_ids }) => task_ids.push(trajectory.task_id.clone()),
            (LayerKind::HintRecorder { capacity }, Store::Hints { entries }) => {
                let hint = trajectory
                    .steps
                    .iter()
                    .map(|s| s.observation.as_str())
                    .chain(std::iter::once(trajectory.final_observation.as_str()))
                    .find_map(extract_hint);
                let key = goal_key(&trajectory.goal);
                if let Some(hint) = hint {
                    if !entries.iter().any(|e| e.key == key) && entries.len() < *capacity {
                        entries.push(HintEntry { key, hint });
                    }
                }
            }
            (LayerKind::TrajectoryStore { embedder }, Store::Episodes { .. }) => {
                let vector = self.embed(*embedder, &trajectory.goal, model)?;
                if let Store::Episodes { entries } = &mut self.store {
                    entries.push(Episode {
                        key: trajectory.goal.clone(),
                        vector,
                        text: trajectory.render(),
                    });
                }
            }
            (LayerKind::Cheatsheet { prompt }, Store::Sheet { text }) => {
                let filled = fill_template(
                    prompt,
                    &[
                        ("cheatsheet", text.as_str()),
                        ("feedback", &feedback.to_string()),
                        ("trajectory", &trajectory.render()),
                    ],
                );
                // A failed merge keeps the old sheet.
                if let Ok(reply) = model.chat(vec![ChatMessage::user(filled)]) {
                    *text = reply.trim().to_string();
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Knowledge for `state`; `upstream` is what earlier layers produced.
    pub fn retrieve(&self, state: &TaskState, upstream: &str, model: &mut dyn ModelAccess) -> Result<String, String> {
        let _ = upstream;
        Ok(match (&self.spec.kind, &self.store) {
            (LayerKind::Echo, _) => serde_json::to_string(state).map_err(|e| e.to_string())?,
            (LayerKind::Recorder, Store::Order { task_ids }) => {
                json!({"updates": task_ids.len(), "order": task_ids}).to_string()
            }
            (LayerKind::HintRecorder { .. }, Store::Hints { entries }) => {
                let query = hash_embed(&goal_key(&state.goal), EMBEDDING_DIM);
                nearest(entries.iter().map(|e| hash_embed(&e.key, EMBEDDING_DIM)), &query)
                    .map(|i| entries[i].hint.clone())
                    .unwrap_or_default()
            }
            (LayerKind::TrajectoryStore { embedder }, Store::Episodes { entries }) => {
                if entries.is_empty() {
                    String::new()
                } else {
                    let query = self.embed(*embedder, &state.goal, model)?;
                    nearest(entries.iter().map(|e| e.vector.clone()), &query)
                        .map(|i| entries[i].text.clone())
                        .unwrap_or_default()
                }
            }
            (LayerKind::Cheatsheet { .. }, Store::Sheet { text }) => text.clone(),
            (LayerKind::Constant { text, repeat }, _) => text.repeat(*repeat),
            (LayerKind::Probe, _) => {
                let cwd = std::env::current_dir().map_err(|e| e.to_string())?;
                let mut vars: Vec<String> = std::env::vars_os().map(|(k, _)| k.to_string_lossy().into_owned()).collect();
                vars.sort();
                serde_json::json!({"cwd": cwd, "env": vars}).to_string()
            }
            _ => String::new(),
        })
    }
}

/// Index of the most similar vector; the earliest wins ties.
fn nearest(vectors: impl Iterator<Item = Vec<f64>>, query: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vectors.enumerate() {
        let sim = cosine(&v, query);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hint_extraction() {
        let obs = "Wrong word. HINT: the jade gate opens with the word 'willow'. You are at row 1, col 2.";
        assert_eq!(extract_hint(obs).unwrap(), "HINT: the jade gate opens with the word 'willow'.");
        assert_eq!(extract_hint("HINT: the red door opens with the square key").unwrap(), "HINT: the red door opens with the square key");
        assert!(extract_hint("nothing here").is_none());
    }

    #[test]
    fn nearest_prefers_earliest_on_ties() {
        let a = vec![1.0, 0.0];
        let vs = vec![vec![0.0, 1.0], a.clone(), a.clone()];
        assert_eq!(nearest(vs.into_iter(), &a), Some(1));
        assert_eq!(nearest(std::iter::empty(), &a), None);
    }
}
