//! The fixed acting policy. It carries no state across tasks: everything it
//! knows beyond the current episode arrives through the knowledge slot.

use serde::{Deserialize, Serialize};

use super::{find_cell, walk, EnvInstance, Step, Trajectory};
use crate::provider::{Caller, ChatMessage, ModelProvider, ModelRequest, ModelRole, Phase};

/// Header placed above retrieved knowledge in the policy prompt.
pub const KNOWLEDGE_HEADER: &str = "### Knowledge from memory";
const KNOWLEDGE_FOOTER: &str = "### End of knowledge";

pub const DEFAULT_POLICY_TEMPLATE: &str = include_str!("../../prompts/policy.txt");

#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub family: &'a str,
    pub goal: &'a str,
    pub knowledge: &'a str,
    pub history: &'a [Step],
    pub observation: &'a str,
}

impl PromptContext<'_> {
    fn initial_observation(&self) -> &str {
        self.history.first().map_or(self.observation, |s| s.observation.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPolicy {
    /// Picks the family's solver below.
    Solver,
    /// Shortest route: key, door, goal.
    KeydoorOptimal,
    AlwaysNorth,
    /// Walks to the gate and speaks the password if the knowledge holds a
    /// matching hint, otherwise guesses "open".
    HintFollower,
    /// Visits rooms in listed order, takes needed items, cooks.
    RecipeForager,
}

impl ScriptedPolicy {
    pub fn act(self, ctx: &PromptContext<'_>) -> String {
        match self {
            ScriptedPolicy::Solver => match ctx.family {
                "keydoor" => ScriptedPolicy::KeydoorOptimal.act(ctx),
                "recipe" => ScriptedPolicy::RecipeForager.act(ctx),
                "hintgate" => ScriptedPolicy::HintFollower.act(ctx),
                _ => "look".to_string(),
            },
            ScriptedPolicy::KeydoorOptimal => keydoor_plan(ctx.initial_observation())
                .and_then(|plan| plan.get(ctx.history.len()).cloned())
                .unwrap_or_else(|| "look".to_string()),
            ScriptedPolicy::AlwaysNorth => "go north".to_string(),
            ScriptedPolicy::HintFollower => hint_follower(ctx),
            ScriptedPolicy::RecipeForager => recipe_forager(ctx),
        }
    }
}

fn keydoor_plan(initial: &str) -> Option<Vec<String>> {
    let start = find_cell(initial, "You are at")?;
    let key = find_cell(initial, "A key lies at")?;
    let door = find_cell(initial, "sits in the wall at")?;
    let goal = find_cell(initial, "The goal is at")?;
    let before_door = (door.0, door.1.checked_sub(1)?);
    let past_door = (door.0, door.1 + 1);
    let mut plan = walk(start, key);
    plan.push("take key".into());
    plan.extend(walk(key, before_door));
    plan.push("open door".into());
    plan.push("go east".into());
    plan.push("go east".into());
    plan.extend(walk(past_door, goal));
    Some(plan)
}

/// Password for the gate named in `goal`, if `knowledge` carries its hint.
pub(crate) fn hinted_password(goal: &str, knowledge: &str) -> Option<String> {
    let variant = goal.strip_prefix("Open the ")?.split_whitespace().next()?;
    let marker = format!("HINT: the {variant} gate opens with the word '");
    let start = knowledge.find(&marker)? + marker.len();
    let word: String = knowledge[start..].chars().take_while(|c| *c != '\'').collect();
    (!word.is_empty()).then_some(word)
}

fn hint_follower(ctx: &PromptContext<'_>) -> String {
    let initial = ctx.initial_observation();
    let (Some(start), Some(gate)) = (find_cell(initial, "You are at"), find_cell(initial, "stands at")) else {
        return "look".to_string();
    };
    let route = walk(start, gate);
    if let Some(step) = route.get(ctx.history.len()) {
        return step.clone();
    }
    match hinted_password(ctx.goal, ctx.knowledge) {
        Some(word) => format!("say {word}"),
        None => "say open".to_string(),
    }
}

fn recipe_forager(ctx: &PromptContext<'_>) -> String {
    let Some(list) = ctx.goal.split("It needs: ").nth(1) else {
        return "look".to_string();
    };
    let needed: Vec<&str> = list.trim_end_matches('.').split(", ").collect();
    let mut taken: Vec<&str> = Vec::new();
    let mut visited: Vec<String> = Vec::new();
    let observations = ctx
        .history
        .iter()
        .map(|s| s.observation.as_str())
        .chain(std::iter::once(ctx.observation));
    for obs in observations {
        if let Some(room) = current_room(obs) {
            if !visited.contains(&room) {
                visited.push(room);
            }
        }
        if let Some(rest) = obs.strip_prefix("You take the ") {
            if let Some(item) = rest.split('.').next() {
                if let Some(n) = needed.iter().find(|n| **n == item) {
                    taken.push(n);
                }
            }
        }
    }
    let here = current_room(ctx.observation).unwrap_or_default();
    if needed.iter().all(|n| taken.contains(n)) {
        let start = visited.first().cloned().unwrap_or_default();
        return if here == start { "cook".to_string() } else { format!("go {start}") };
    }
    let seen = ctx
        .observation
        .split("You see: ")
        .nth(1)
        .and_then(|s| s.split(". Exits").next())
        .unwrap_or("");
    if let Some(item) = seen.split(", ").find(|i| needed.contains(i) && !taken.contains(i)) {
        return format!("take {item}");
    }
    let exits = ctx
        .observation
        .split("Exits: ")
        .nth(1)
        .map(|s| s.trim_end_matches('.').split(", ").map(str::to_string).collect::<Vec<_>>())
        .unwrap_or_default();
    match exits.into_iter().find(|e| !visited.contains(e)) {
        Some(room) => format!("go {room}"),
        None => "look".to_string(),
    }
}

fn current_room(obs: &str) -> Option<String> {
    let rest = obs.split("You are in the ").nth(1)?;
    Some(rest.split('.').next()?.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActionParser {
    /// Text after the last `Action:` marker, else the first non-empty line.
    #[default]
    ActionLine,
    FirstLine,
}

impl ActionParser {
    pub fn parse(self, reply: &str) -> String {
        let clean = |s: &str| s.trim().trim_matches('`').trim().to_string();
        if self == ActionParser::ActionLine {
            if let Some(line) = reply
                .lines()
                .rev()
                .find_map(|l| l.trim().strip_prefix("Action:").or_else(|| l.trim().strip_prefix("action:")))
            {
                return clean(line);
            }
        }
        reply.lines().map(str::trim).find(|l| !l.is_empty()).map(clean).unwrap_or_default()
    }
}

/// Model-driven policy: renders the template, asks the provider, parses one
/// action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatPolicy {
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default)]
    pub action_parser: ActionParser,
    /// Number of most recent steps shown in the prompt.
    #[serde(default = "default_history_window")]
    pub history_window: usize,
}

fn default_template() -> String {
    DEFAULT_POLICY_TEMPLATE.to_string()
}

fn default_history_window() -> usize {
    10
}

impl Default for ChatPolicy {
    fn default() -> Self {
        Self {
            prompt_template: default_template(),
            action_parser: ActionParser::default(),
            history_window: default_history_window(),
        }
    }
}

impl ChatPolicy {
    pub fn render(&self, ctx: &PromptContext<'_>) -> String {
        let knowledge = if ctx.knowledge.is_empty() {
            String::new()
        } else {
            format!("{KNOWLEDGE_HEADER}\n{}\n{KNOWLEDGE_FOOTER}\n", ctx.knowledge)
        };
        let skip = ctx.history.len().saturating_sub(self.history_window);
        let history: String = ctx.history[skip..]
            .iter()
            .map(|s| format!("Observation: {}\nAction: {}\n", s.observation, s.action))
            .collect();
        crate::meta::fill_template(
            &self.prompt_template,
            &[
                ("knowledge", &knowledge),
                ("goal", ctx.goal),
                ("history", if history.is_empty() { "(none)\n" } else { &history }),
                ("observation", ctx.observation),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyAgent {
    Scripted { policy: ScriptedPolicy },
    Chat(ChatPolicy),
}

impl Default for PolicyAgent {
    fn default() -> Self {
        PolicyAgent::Scripted {
            policy: ScriptedPolicy::Solver,
        }
    }
}

impl PolicyAgent {
    pub fn scripted(policy: ScriptedPolicy) -> Self {
        PolicyAgent::Scripted { policy }
    }
}

/// Plays one episode. Provider faults end the episode with feedback 0 and a
/// fault note instead of an error.
pub fn rollout(
    env: &mut EnvInstance,
    task_id: &str,
    policy: &PolicyAgent,
    knowledge: &str,
    provider: &ModelProvider,
    phase: Phase,
) -> Trajectory {
    let goal = env.initial().goal.clone();
    let mut observation = env.initial().observation.clone();
    let mut steps: Vec<Step> = Vec::new();
    loop {
        let ctx = PromptContext {
            family: &env.family,
            goal: &goal,
            knowledge,
            history: &steps,
            observation: &observation,
        };
        let action = match policy {
            PolicyAgent::Scripted { policy } => policy.act(&ctx),
            PolicyAgent::Chat(chat) => {
                let request = ModelRequest::chat(
                    ModelRole::Chat,
                    vec![ChatMessage::user(chat.render(&ctx))],
                    Caller::Policy,
                    phase,
                    task_id,
                );
                match provider.complete(&request) {
                    Ok((text, _)) => chat.action_parser.parse(&text),
                    Err(fault) => {
                        steps.push(Step {
                            observation: observation.clone(),
                            action: String::new(),
                        });
                        return Trajectory {
                            task_id: task_id.to_string(),
                            goal,
                            steps,
                            final_observation: observation,
                            feedback: 0.0,
                            truncated: true,
                            fault: Some(fault.to_string()),
                        };
                    }
                }
            }
        };
        let result = env.step(&action).expect("rollout never steps a finished episode");
        steps.push(Step {
            observation: std::mem::replace(&mut observation, result.observation),
            action,
        });
        if result.done {
            return Trajectory {
                task_id: task_id.to_string(),
                goal,
                steps,
                final_observation: observation,
                feedback: result.score_if_done.unwrap_or(0.0),
                truncated: result.truncated,
                fault: None,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hint_extraction() {
        let k = "noise HINT: the jade gate opens with the word 'willow'. more";
        assert_eq!(hinted_password("Open the jade gate by speaking its password.", k).as_deref(), Some("willow"));
        assert_eq!(hinted_password("Open the azure gate by speaking its password.", k), None);
    }

    #[test]
    fn action_parsing() {
        assert_eq!(ActionParser::ActionLine.parse("thinking...\nAction: go north"), "go north");
        assert_eq!(ActionParser::ActionLine.parse("\n  `take key`\n"), "take key");
        assert_eq!(ActionParser::FirstLine.parse("look\nAction: cook"), "look");
    }

    #[test]
    fn knowledge_goes_under_header_before_goal() {
        let chat = ChatPolicy::default();
        let ctx = PromptContext {
            family: "keydoor",
            goal: "GOAL-TEXT",
            knowledge: "remember the key",
            history: &[],
            observation: "obs",
        };
        let prompt = chat.render(&ctx);
        let header = prompt.find(KNOWLEDGE_HEADER).unwrap();
        assert!(header < prompt.find("GOAL-TEXT").unwrap());
        assert!(prompt.contains("remember the key"));
        let empty = chat.render(&PromptContext { knowledge: "", ..ctx });
        assert!(!empty.contains(KNOWLEDGE_HEADER));
    }
}
