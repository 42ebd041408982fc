//! Courtyard with a password gate. The password depends only on the gate
//! variant (`seed % variants`), and a wrong guess ends the episode while
//! revealing the hint sentence, so collection trajectories carry exactly the
//! knowledge deployment tasks of the same variant need.

use rand::Rng;

use super::{family_rng, normalize_action, parse_move, Environment, FamilySpec, GateVariant, Reset, Transition, NOTHING_HAPPENS};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateLayout {
    pub size: usize,
    pub start: Cell,
    pub gate: Cell,
    pub variant: GateVariant,
}

impl GateLayout {
    pub fn generate(spec: &FamilySpec, seed: u64) -> Self {
        let mut rng = family_rng("hintgate", seed);
        let size = spec.grid_size;
        let start = (rng.gen_range(0..size), rng.gen_range(0..size));
        let mut gate = (rng.gen_range(0..size), rng.gen_range(0..size));
        while gate == start {
            gate = (rng.gen_range(0..size), rng.gen_range(0..size));
        }
        let variant = spec.variants[(seed % spec.variants.len() as u64) as usize].clone();
        Self {
            size,
            start,
            gate,
            variant,
        }
    }
}

/// The sentence a failed attempt reveals.
pub fn hint_sentence(variant: &GateVariant) -> String {
    format!("HINT: the {} gate opens with the word '{}'.", variant.name, variant.password)
}

#[derive(Debug, Clone)]
pub struct HintGate {
    spec: FamilySpec,
    layout: Option<GateLayout>,
    pos: Cell,
    opened: bool,
}

impl HintGate {
    pub fn new(spec: FamilySpec) -> Self {
        Self {
            spec,
            layout: None,
            pos: (0, 0),
            opened: false,
        }
    }

    pub fn layout(&self) -> Option<&GateLayout> {
        self.layout.as_ref()
    }

    fn here(&self) -> String {
        format!("You are at row {}, col {}.", self.pos.0, self.pos.1)
    }
}

impl Environment for HintGate {
    fn reset(&mut self, seed: u64) -> Reset {
        let layout = GateLayout::generate(&self.spec, seed);
        self.pos = layout.start;
        self.opened = false;
        let observation = format!(
            "You stand in a {n}x{n} courtyard. You are at row {sr}, col {sc}. The {v} gate stands at row {gr}, col {gc}.",
            n = layout.size,
            sr = layout.start.0,
            sc = layout.start.1,
            v = layout.variant.name,
            gr = layout.gate.0,
            gc = layout.gate.1,
        );
        let goal = format!("Open the {} gate by speaking its password.", layout.variant.name);
        self.layout = Some(layout);
        Reset { observation, goal }
    }

    fn step(&mut self, action: &str) -> Transition {
        let layout = self.layout.clone().expect("reset before step");
        let action = normalize_action(action);
        let event = if let Some(dir) = parse_move(&action) {
            let (dr, dc) = dir.delta();
            let r = self.pos.0 as i64 + dr;
            let c = self.pos.1 as i64 + dc;
            if r < 0 || c < 0 || r >= layout.size as i64 || c >= layout.size as i64 {
                "You bump into the courtyard wall.".to_string()
            } else {
                self.pos = (r as usize, c as usize);
                if self.pos == layout.gate {
                    format!("You move {} and stand before the {} gate.", dir.word(), layout.variant.name)
                } else {
                    format!("You move {}.", dir.word())
                }
            }
        } else if let Some(word) = action.strip_prefix("say ") {
            let word = word.trim().trim_matches(|c| c == '\'' || c == '"');
            if self.pos != layout.gate {
                "Your words echo through the empty courtyard.".to_string()
            } else if word == layout.variant.password {
                self.opened = true;
                return Transition {
                    observation: format!("The {} gate swings open. You pass through.", layout.variant.name),
                    done: true,
                };
            } else {
                return Transition {
                    observation: format!(
                        "The {} gate stays shut and seals itself. Words are carved beside it: {}",
                        layout.variant.name,
                        hint_sentence(&layout.variant)
                    ),
                    done: true,
                };
            }
        } else if action == "look" {
            "You look around.".to_string()
        } else {
            NOTHING_HAPPENS.to_string()
        };
        Transition {
            observation: format!("{event} {}", self.here()),
            done: false,
        }
    }

    fn score(&self) -> f64 {
        if self.opened {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_env, walk};

    #[test]
    fn wrong_word_reveals_hint() {
        let spec = FamilySpec::builtin("hintgate").unwrap();
        let layout = GateLayout::generate(&spec, 3);
        let mut env = make_env("hintgate", 3).unwrap();
        for m in walk(layout.start, layout.gate) {
            env.step(&m).unwrap();
        }
        let r = env.step("say open").unwrap();
        assert!(r.done);
        assert_eq!(r.score_if_done, Some(0.0));
        assert!(r.observation.contains(&hint_sentence(&layout.variant)));
    }

    #[test]
    fn right_word_opens() {
        let spec = FamilySpec::builtin("hintgate").unwrap();
        let layout = GateLayout::generate(&spec, 7);
        let mut env = make_env("hintgate", 7).unwrap();
        for m in walk(layout.start, layout.gate) {
            env.step(&m).unwrap();
        }
        let r = env.step(&format!("say {}", layout.variant.password)).unwrap();
        assert_eq!(r.score_if_done, Some(1.0));
    }

    #[test]
    fn variant_cycles_with_seed() {
        let spec = FamilySpec::builtin("hintgate").unwrap();
        assert_eq!(GateLayout::generate(&spec, 0).variant, GateLayout::generate(&spec, 5).variant);
        assert_ne!(GateLayout::generate(&spec, 0).variant, GateLayout::generate(&spec, 1).variant);
    }
}
