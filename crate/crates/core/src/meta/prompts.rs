use std::path::Path;

use crate::error::{Error, Result};

/// Replaces every `{{name}}` with its value. Unknown slots are left as is.
pub fn fill_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match slots.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Templates and fixed texts used by the meta agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub planning: String,
    pub reformat: String,
    pub implementation: String,
    pub debugging: String,
    pub interface_template: String,
    pub tool_catalog: String,
    pub one_shot_plan: String,
}

const FILES: [&str; 7] = [
    "planning.txt",
    "reformat.txt",
    "implementation.txt",
    "debugging.txt",
    "interface.txt",
    "tools.txt",
    "one_shot_plan.json",
];

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            planning: include_str!("../../prompts/planning.txt").into(),
            reformat: include_str!("../../prompts/reformat.txt").into(),
            implementation: include_str!("../../prompts/implementation.txt").into(),
            debugging: include_str!("../../prompts/debugging.txt").into(),
            interface_template: include_str!("../../prompts/interface.txt").into(),
            tool_catalog: include_str!("../../prompts/tools.txt").into(),
            one_shot_plan: include_str!("../../prompts/one_shot_plan.json").into(),
        }
    }
}

impl PromptSet {
    /// Defaults, with any of the standard file names found in `dir`
    /// replacing the corresponding template.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!("prompt directory {} does not exist", dir.display())));
        }
        let mut set = Self::default();
        for file in FILES {
            let path = dir.join(file);
            if !path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            *set.slot_mut(file) = text;
        }
        Ok(set)
    }

    fn slot_mut(&mut self, file: &str) -> &mut String {
        match file {
            "planning.txt" => &mut self.planning,
            "reformat.txt" => &mut self.reformat,
            "implementation.txt" => &mut self.implementation,
            "debugging.txt" => &mut self.debugging,
            "interface.txt" => &mut self.interface_template,
            "tools.txt" => &mut self.tool_catalog,
            _ => &mut self.one_shot_plan,
        }
    }
}

/// Benchmark description shipped for a built-in family.
pub fn benchmark_description(family: &str) -> Option<&'static str> {
    match family {
        "keydoor" => Some(include_str!("../../prompts/benchmarks/keydoor.txt")),
        "recipe" => Some(include_str!("../../prompts/benchmarks/recipe.txt")),
        "hintgate" => Some(include_str!("../../prompts/benchmarks/hintgate.txt")),
        _ => None,
    }
}
