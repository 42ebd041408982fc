//! Declarative layered designs served by the `memarch-design-host` binary.
//!
//! A `design.json` artifact names its layers and the order in which
//! `general_update` and `general_retrieve` visit them:
//!
//! ```json
//! {
//!   "name": "hint-recorder",
//!   "layers": [{"name": "hints", "kind": "hint_recorder", "capacity": 5}],
//!   "general_update": ["hints"],
//!   "general_retrieve": ["hints"]
//! }
//! ```
//!
//! Retrieval feeds each layer the knowledge produced so far and joins the
//! non-empty outputs with a blank line.

mod host;
mod layers;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use host::{serve, DesignRuntime, ModelAccess};
pub use layers::{extract_hint, Layer};

/// Design artifacts shipped with the crate, by name.
pub const SHIPPED: &[(&str, &str)] = &[
    ("null", include_str!("../../designs/null.json")),
    ("echo", include_str!("../../designs/echo.json")),
    ("recorder", include_str!("../../designs/recorder.json")),
    ("hint-recorder", include_str!("../../designs/hint-recorder.json")),
    ("trajectory-retrieval", include_str!("../../designs/trajectory-retrieval.json")),
    ("cheatsheet", include_str!("../../designs/cheatsheet.json")),
];

/// Names evaluated by `baseline-matrix`.
pub const BASELINES: &[&str] = &["null", "trajectory-retrieval", "cheatsheet", "hint-recorder"];

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    /// Before answering `init`.
    Start,
    Init,
    Update,
    Retrieve,
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misbehavior {
    /// Answer with an `error` response carrying the message.
    Error,
    /// Print the message to stderr and exit with status 3.
    Crash,
    /// Stop responding.
    Hang,
    /// Print a line that is not JSON.
    Garbage,
    /// Print a line longer than any sane cap.
    Oversize,
    /// Answer, then print an extra unsolicited line.
    Stray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// No storage; empty knowledge.
    Null,
    /// Returns the task state as JSON.
    Echo,
    /// Records update order; retrieve reports `{"updates": n, "order": [...]}`.
    Recorder,
    /// Keeps hint sentences keyed by goal text, for at most `capacity` keys.
    HintRecorder { capacity: usize },
    /// Stores rendered trajectories under a goal embedding; returns the top-1.
    TrajectoryStore {
        #[serde(default)]
        embedder: Embedder,
    },
    /// A single global document rewritten by the chat model after each update.
    Cheatsheet {
        #[serde(default = "default_merge_prompt")]
        prompt: String,
    },
    /// Reports the working directory and environment variable names.
    Probe,
    Constant {
        text: String,
        #[serde(default = "one")]
        repeat: usize,
    },
    Misbehave {
        on: Operation,
        /// Number of matching operations that behave before the fault.
        #[serde(default)]
        after: usize,
        action: Misbehavior,
        #[serde(default)]
        message: String,
    },
    Sleep {
        on: Operation,
        ms: u64,
    },
}

fn one() -> usize {
    1
}

fn default_merge_prompt() -> String {
    include_str!("../../prompts/cheatsheet_merge.txt").to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedder {
    /// Local [`crate::provider::hash_embed`]; no model traffic.
    #[default]
    Hash,
    /// The embedding role via `model_call`.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub layers: Vec<LayerSpec>,
    pub general_update: Vec<String>,
    pub general_retrieve: Vec<String>,
    #[serde(default = "yes")]
    pub supports_snapshot: bool,
}

fn yes() -> bool {
    true
}

impl DesignSpec {
    /// Parses and checks that both entry points only reference declared
    /// layers.
    pub fn parse(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("not valid JSON: {e}"))?;
        for entry in ["general_update", "general_retrieve"] {
            if value.get(entry).is_none() {
                return Err(format!("missing entry point `{entry}`"));
            }
        }
        let spec: DesignSpec = serde_json::from_value(value).map_err(|e| format!("invalid design: {e}"))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut names = BTreeSet::new();
        for layer in &self.layers {
            if !names.insert(layer.name.as_str()) {
                return Err(format!("duplicate layer name `{}`", layer.name));
            }
            if let LayerKind::HintRecorder { capacity: 0 } = layer.kind {
                return Err(format!("layer `{}`: capacity must be positive", layer.name));
            }
        }
        for (entry, list) in [("general_update", &self.general_update), ("general_retrieve", &self.general_retrieve)] {
            if let Some(bad) = list.iter().find(|n| !names.contains(n.as_str())) {
                return Err(format!("`{entry}` references unknown layer `{bad}`"));
            }
        }
        Ok(())
    }
}

/// Static entry-point check run on freshly generated artifacts before any
/// trial run. `file_name` selects the artifact kind.
pub fn check_conformance(file_name: &str, source: &str) -> Result<(), String> {
    if file_name.ends_with(".json") {
        DesignSpec::parse(source).map(|_| ())
    } else if file_name.ends_with(".py") {
        for entry in ["general_update", "general_retrieve"] {
            if !source.contains(&format!("def {entry}(")) {
                return Err(format!("missing entry point `{entry}`"));
            }
        }
        Ok(())
    } else {
        Err(format!("unsupported artifact type: {file_name}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_designs_parse() {
        for (name, src) in SHIPPED {
            let spec = DesignSpec::parse(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&spec.name, name);
        }
        for name in BASELINES {
            assert!(shipped(name).is_some());
        }
    }

    #[test]
    fn conformance_rejects_missing_retrieve() {
        let src = r#"{"name":"x","layers":[],"general_update":[]}"#;
        let err = check_conformance("design.json", src).unwrap_err();
        assert!(err.contains("general_retrieve"), "{err}");
        assert!(check_conformance("design.py", "def general_update(self):\n").is_err());
        assert!(check_conformance(
            "design.py",
            "def general_update(self, t, f):\n    pass\ndef general_retrieve(self, s):\n    return ''\n"
        )
        .is_ok());
    }

    #[test]
    fn unknown_layer_reference() {
        let src = r#"{"name":"x","layers":[{"name":"a","kind":"null"}],"general_update":["a"],"general_retrieve":["b"]}"#;
        assert!(DesignSpec::parse(src).unwrap_err().contains("unknown layer `b`"));
        let src = r#"{"name":"x","layers":[{"name":"a","kind":"warp"}],"general_update":[],"general_retrieve":[]}"#;
        assert!(DesignSpec::parse(src).is_err());
    }
}
