//! Key, locked door, goal. The grid is cut by a wall column with one door;
//! start and key lie west of it, the goal east.

use rand::Rng;

use super::{family_rng, normalize_action, parse_move, Environment, FamilySpec, Reset, Transition, NOTHING_HAPPENS};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub size: usize,
    pub wall_col: usize,
    pub start: Cell,
    pub key: Cell,
    pub door: Cell,
    pub goal: Cell,
}

impl Layout {
    pub fn generate(size: usize, seed: u64) -> Self {
        let mut rng = family_rng("keydoor", seed);
        let wall_col = size / 2;
        let west = |rng: &mut rand_chacha::ChaCha8Rng| (rng.gen_range(0..size), rng.gen_range(0..wall_col));
        let start = west(&mut rng);
        let mut key = west(&mut rng);
        while key == start {
            key = west(&mut rng);
        }
        let door = (rng.gen_range(0..size), wall_col);
        let goal = (rng.gen_range(0..size), rng.gen_range(wall_col + 1..size));
        Self {
            size,
            wall_col,
            start,
            key,
            door,
            goal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KeyDoor {
    spec: FamilySpec,
    layout: Option<Layout>,
    pos: Cell,
    has_key: bool,
    door_open: bool,
    reached: bool,
}

impl KeyDoor {
    pub fn new(spec: FamilySpec) -> Self {
        Self {
            spec,
            layout: None,
            pos: (0, 0),
            has_key: false,
            door_open: false,
            reached: false,
        }
    }

    pub fn layout(&self) -> Option<&Layout> {
        self.layout.as_ref()
    }

    fn here(&self) -> String {
        format!("You are at row {}, col {}.", self.pos.0, self.pos.1)
    }
}

impl Environment for KeyDoor {
    fn reset(&mut self, seed: u64) -> Reset {
        let layout = Layout::generate(self.spec.grid_size, seed);
        self.pos = layout.start;
        self.has_key = false;
        self.door_open = false;
        self.reached = false;
        let observation = format!(
            "You are in a {n}x{n} grid of rooms split by a wall in column {w}. You are at row {sr}, col {sc}. \
             A key lies at row {kr}, col {kc}. A locked door sits in the wall at row {dr}, col {dc}. \
             The goal is at row {gr}, col {gc}.",
            n = layout.size,
            w = layout.wall_col,
            sr = layout.start.0,
            sc = layout.start.1,
            kr = layout.key.0,
            kc = layout.key.1,
            dr = layout.door.0,
            dc = layout.door.1,
            gr = layout.goal.0,
            gc = layout.goal.1,
        );
        self.layout = Some(layout);
        Reset {
            observation,
            goal: "Pick up the key, unlock the door and reach the goal.".to_string(),
        }
    }

    fn step(&mut self, action: &str) -> Transition {
        let layout = self.layout.clone().expect("reset before step");
        let action = normalize_action(action);
        let event = if let Some(dir) = parse_move(&action) {
            let (dr, dc) = dir.delta();
            let r = self.pos.0 as i64 + dr;
            let c = self.pos.1 as i64 + dc;
            if r < 0 || c < 0 || r >= layout.size as i64 || c >= layout.size as i64 {
                "You bump into the outer wall.".to_string()
            } else {
                let target = (r as usize, c as usize);
                if target.1 == layout.wall_col && !(target == layout.door && self.door_open) {
                    if target == layout.door {
                        "The door is locked.".to_string()
                    } else {
                        "You bump into the wall.".to_string()
                    }
                } else {
                    self.pos = target;
                    if target == layout.goal {
                        self.reached = true;
                        return Transition {
                            observation: format!("You reach the goal! {}", self.here()),
                            done: true,
                        };
                    }
                    format!("You move {}.", dir.word())
                }
            }
        } else {
            match action.as_str() {
                "take key" if self.pos == layout.key && !self.has_key => {
                    self.has_key = true;
                    "You pick up the key. You are carrying the key.".to_string()
                }
                "take key" => "There is no key here.".to_string(),
                "open door" => {
                    let adjacent = self.pos.0.abs_diff(layout.door.0) + self.pos.1.abs_diff(layout.door.1) == 1;
                    if !adjacent {
                        "There is no door next to you.".to_string()
                    } else if self.door_open {
                        "The door is already open.".to_string()
                    } else if !self.has_key {
                        "The door is locked. You need the key.".to_string()
                    } else {
                        self.door_open = true;
                        "The door swings open.".to_string()
                    }
                }
                "look" => "You look around.".to_string(),
                _ => NOTHING_HAPPENS.to_string(),
            }
        };
        Transition {
            observation: format!("{event} {}", self.here()),
            done: false,
        }
    }

    fn score(&self) -> f64 {
        if self.reached {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::make_env;

    #[test]
    fn take_key_on_key_tile() {
        let mut env = make_env("keydoor", 1).unwrap();
        let layout = Layout::generate(5, 1);
        for m in crate::environments::walk(layout.start, layout.key) {
            env.step(&m).unwrap();
        }
        let r = env.step("take key").unwrap();
        assert!(r.observation.contains("carrying the key"), "{}", r.observation);
    }

    #[test]
    fn invalid_action_is_noop_and_costs_a_step() {
        let mut env = make_env("keydoor", 1).unwrap();
        let r = env.step("dance wildly").unwrap();
        assert!(r.observation.starts_with(NOTHING_HAPPENS));
        assert_eq!(env.step_count(), 1);
        assert!(!r.done);
    }

    #[test]
    fn step_limit_scores_zero() {
        let mut env = make_env("keydoor", 2).unwrap();
        let mut last = None;
        for _ in 0..40 {
            last = Some(env.step("look").unwrap());
        }
        let last = last.unwrap();
        assert!(last.done && last.truncated);
        assert_eq!(last.score_if_done, Some(0.0));
    }

    #[test]
    fn layouts_differ_between_seeds() {
        assert_ne!(Layout::generate(5, 1), Layout::generate(5, 2));
    }
}
