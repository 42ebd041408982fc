use serde::{Deserialize, Serialize};

/// The meta agent's proposal for the next design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub reflection: String,
    pub idea: String,
    pub trajectory_score_assessment: String,
    pub suggested_changes: String,
}

/// Outermost `{...}` span of `text`, if any.
fn json_span(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

impl Plan {
    /// Reads a plan from a model reply, tolerating prose or code fences
    /// around the JSON object.
    pub fn parse(reply: &str) -> Result<Self, String> {
        let span = json_span(reply).ok_or("reply contains no JSON object")?;
        let value: serde_json::Value = serde_json::from_str(span).map_err(|e| format!("invalid JSON: {e}"))?;
        let field = |name: &str| -> Result<String, String> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(format!("field `{name}` is not a string")),
                None => Err(format!("missing field `{name}`")),
            }
        };
        let plan = Plan {
            reflection: field("reflection").unwrap_or_default(),
            idea: field("idea").unwrap_or_default(),
            trajectory_score_assessment: field("trajectory_score_assessment")?,
            suggested_changes: field("suggested_changes")?,
        };
        for (name, text) in [
            ("trajectory_score_assessment", &plan.trajectory_score_assessment),
            ("suggested_changes", &plan.suggested_changes),
        ] {
            if text.trim().is_empty() {
                return Err(format!("field `{name}` is empty"));
            }
        }
        Ok(plan)
    }
}
