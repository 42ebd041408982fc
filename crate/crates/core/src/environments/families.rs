use serde::{Deserialize, Serialize};

const KEYDOOR: &str = include_str!("../../families/keydoor.json");
const RECIPE: &str = include_str!("../../families/recipe.json");
const HINTGATE: &str = include_str!("../../families/hintgate.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVariant {
    pub name: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dish {
    pub name: String,
    pub ingredients: Vec<String>,
}

/// Generator parameters and grammar of a built-in family, loaded from the
/// shipped `families/*.json` files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub format_version: u32,
    pub family: String,
    pub observation_version: u32,
    pub max_steps: usize,
    pub binary: bool,
    pub grammar: Vec<String>,
    #[serde(default)]
    pub grid_size: usize,
    #[serde(default)]
    pub variants: Vec<GateVariant>,
    #[serde(default)]
    pub start: String,
    #[serde(default)]
    pub locations: Vec<String>,
    #[serde(default)]
    pub dishes: Vec<Dish>,
    #[serde(default)]
    pub items: Vec<String>,
    #[serde(default)]
    pub distractors: usize,
    #[serde(default)]
    pub notes: String,
}

impl FamilySpec {
    pub fn builtin(family: &str) -> Option<Self> {
        let text = match family {
            "keydoor" => KEYDOOR,
            "recipe" => RECIPE,
            "hintgate" => HINTGATE,
            _ => return None,
        };
        Some(serde_json::from_str(text).expect("shipped family spec parses"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_specs_parse() {
        for f in ["keydoor", "recipe", "hintgate"] {
            let spec = FamilySpec::builtin(f).unwrap();
            assert_eq!(spec.family, f);
            assert!(!spec.grammar.is_empty());
        }
        assert_eq!(FamilySpec::builtin("keydoor").unwrap().max_steps, 40);
        assert_eq!(FamilySpec::builtin("recipe").unwrap().max_steps, 60);
        assert_eq!(FamilySpec::builtin("hintgate").unwrap().max_steps, 40);
    }
}
