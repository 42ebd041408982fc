//! Gather ingredients scattered across rooms, then cook in the start room.
//! Fractional score: completed subgoals over total subgoals.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{family_rng, normalize_action, Environment, FamilySpec, Reset, Transition, NOTHING_HAPPENS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kitchen {
    pub dish: String,
    pub ingredients: Vec<String>,
    /// Items per location, in `FamilySpec::locations` order.
    pub placement: Vec<(String, Vec<String>)>,
}

impl Kitchen {
    pub fn generate(spec: &FamilySpec, seed: u64) -> Self {
        let mut rng = family_rng("recipe", seed);
        let dish = &spec.dishes[rng.gen_range(0..spec.dishes.len())];
        let rooms: Vec<&String> = spec.locations.iter().filter(|l| **l != spec.start).collect();
        let mut placement: Vec<(String, Vec<String>)> =
            spec.locations.iter().map(|l| (l.clone(), Vec::new())).collect();
        let mut place = |item: &str, rng: &mut rand_chacha::ChaCha8Rng| {
            let room = rooms[rng.gen_range(0..rooms.len())];
            let slot = placement.iter_mut().find(|(l, _)| l == room).expect("room exists");
            slot.1.push(item.to_string());
        };
        for item in &dish.ingredients {
            place(item, &mut rng);
        }
        let mut others: Vec<&String> = spec.items.iter().filter(|i| !dish.ingredients.contains(i)).collect();
        others.shuffle(&mut rng);
        for item in others.into_iter().take(spec.distractors) {
            place(item, &mut rng);
        }
        for (_, items) in &mut placement {
            items.sort();
        }
        Self {
            dish: dish.name.clone(),
            ingredients: dish.ingredients.clone(),
            placement,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recipe {
    spec: FamilySpec,
    kitchen: Option<Kitchen>,
    location: String,
    rooms: Vec<(String, Vec<String>)>,
    carried: BTreeSet<String>,
    cooked: bool,
}

impl Recipe {
    pub fn new(spec: FamilySpec) -> Self {
        Self {
            location: spec.start.clone(),
            spec,
            kitchen: None,
            rooms: Vec::new(),
            carried: BTreeSet::new(),
            cooked: false,
        }
    }

    pub fn kitchen(&self) -> Option<&Kitchen> {
        self.kitchen.as_ref()
    }

    fn describe(&self) -> String {
        let items = &self.rooms.iter().find(|(l, _)| *l == self.location).expect("known room").1;
        let seen = if items.is_empty() { "nothing".to_string() } else { items.join(", ") };
        let exits: Vec<&str> = self
            .spec
            .locations
            .iter()
            .filter(|l| **l != self.location)
            .map(String::as_str)
            .collect();
        format!("You are in the {}. You see: {}. Exits: {}.", self.location, seen, exits.join(", "))
    }

    fn needed(&self) -> &[String] {
        &self.kitchen.as_ref().expect("reset before step").ingredients
    }
}

impl Environment for Recipe {
    fn reset(&mut self, seed: u64) -> Reset {
        let kitchen = Kitchen::generate(&self.spec, seed);
        self.rooms = kitchen.placement.clone();
        self.location = self.spec.start.clone();
        self.carried.clear();
        self.cooked = false;
        let goal = format!("Cook the {}. It needs: {}.", kitchen.dish, kitchen.ingredients.join(", "));
        self.kitchen = Some(kitchen);
        Reset {
            observation: self.describe(),
            goal,
        }
    }

    fn step(&mut self, action: &str) -> Transition {
        let action = normalize_action(action);
        let event = if let Some(place) = action.strip_prefix("go ") {
            let place = place.trim_start_matches("to ").trim_start_matches("the ");
            if self.spec.locations.iter().any(|l| l == place) {
                if place == self.location {
                    "You are already here.".to_string()
                } else {
                    self.location = place.to_string();
                    format!("You walk to the {place}.")
                }
            } else {
                "You cannot go there.".to_string()
            }
        } else if let Some(item) = action.strip_prefix("take ") {
            let item = item.trim_start_matches("the ");
            let room = &mut self.rooms.iter_mut().find(|(l, _)| *l == self.location).expect("known room").1;
            if let Some(pos) = room.iter().position(|i| i == item) {
                room.remove(pos);
                self.carried.insert(item.to_string());
                format!("You take the {item}.")
            } else {
                format!("There is no {item} here.")
            }
        } else if action == "cook" {
            let missing: Vec<&String> = self.needed().iter().filter(|i| !self.carried.contains(*i)).collect();
            if self.location != self.spec.start {
                format!("You can only cook in the {}.", self.spec.start)
            } else if !missing.is_empty() {
                let missing: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
                format!("You still lack: {}.", missing.join(", "))
            } else {
                self.cooked = true;
                let dish = self.kitchen.as_ref().expect("reset").dish.clone();
                return Transition {
                    observation: format!("You cook the {dish}. Delicious!"),
                    done: true,
                };
            }
        } else if action == "look" {
            "You look around.".to_string()
        } else {
            NOTHING_HAPPENS.to_string()
        };
        Transition {
            observation: format!("{event} {}", self.describe()),
            done: false,
        }
    }

    fn score(&self) -> f64 {
        let Some(kitchen) = &self.kitchen else { return 0.0 };
        let taken = kitchen.ingredients.iter().filter(|i| self.carried.contains(*i)).count();
        let total = kitchen.ingredients.len() + 1;
        (taken + usize::from(self.cooked)) as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::make_env;

    #[test]
    fn partial_credit_on_truncation() {
        let spec = FamilySpec::builtin("recipe").unwrap();
        let k = Kitchen::generate(&spec, 4);
        let (room, _) = k.placement.iter().find(|(_, items)| items.contains(&k.ingredients[0])).unwrap();
        let mut env = make_env("recipe", 4).unwrap();
        env.step(&format!("go {room}")).unwrap();
        env.step(&format!("take {}", k.ingredients[0])).unwrap();
        let mut last = None;
        while !env.is_done() {
            last = Some(env.step("look").unwrap());
        }
        let last = last.unwrap();
        assert!(last.truncated);
        assert_eq!(last.score_if_done, Some(0.25));
    }

    #[test]
    fn ingredients_never_in_start_room() {
        let spec = FamilySpec::builtin("recipe").unwrap();
        for seed in 0..50 {
            let k = Kitchen::generate(&spec, seed);
            assert!(k.placement[0].1.is_empty());
            let placed: usize = k.placement.iter().map(|(_, i)| i.len()).sum();
            assert_eq!(placed, 3 + spec.distractors);
        }
    }

    #[test]
    fn cooking_without_ingredients_fails() {
        let mut env = make_env("recipe", 1).unwrap();
        let r = env.step("cook").unwrap();
        assert!(r.observation.starts_with("You still lack"));
        assert!(!r.done);
    }
}
