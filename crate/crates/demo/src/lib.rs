//! Browser bindings for the demo page in `www/`. Every export takes and
//! returns plain strings or numbers so the same functions run natively in
//! tests.

use memarch::archive::{
    allocate, normalize_performance, record_score, sampling_distribution, stratified_log_sample, LogEntry,
    SamplingParams,
};
use memarch::environments::{make_env, EnvInstance, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// `records` is a JSON array of `{"score": f, "visits": n}`. Returns
/// `{"rows": [{normalized, sampling_score, probability}], "sum": f}` or
/// `{"error": ...}`.
#[wasm_bindgen]
pub fn explore_sampling(records: &str, baseline: f64, lambda: f64, alpha: f64, temperature: f64) -> String {
    let parsed: Vec<Value> = match serde_json::from_str(records) {
        Ok(v) => v,
        Err(e) => return error(e),
    };
    let params = SamplingParams {
        baseline_score: baseline,
        lambda,
        alpha,
        temperature,
        ..SamplingParams::default()
    };
    let mut pairs = Vec::with_capacity(parsed.len());
    for r in &parsed {
        let (Some(score), Some(visits)) = (r["score"].as_f64(), r["visits"].as_u64()) else {
            return error("each record needs a numeric score and a non-negative integer visits");
        };
        if !(0.0..=1.0).contains(&score) {
            return error(format!("score {score} outside [0,1]"));
        }
        pairs.push((score, visits));
    }
    let js: Vec<f64> = pairs.iter().map(|&(s, t)| record_score(s, t, &params)).collect();
    let probs = match sampling_distribution(&js, temperature) {
        Ok(p) => p,
        Err(e) => return error(e),
    };
    let rows: Vec<Value> = pairs
        .iter()
        .zip(&js)
        .zip(&probs)
        .map(|((&(s, _), j), p)| {
            json!({
                "normalized": normalize_performance(s, &params),
                "sampling_score": j,
                "probability": p,
            })
        })
        .collect();
    json!({ "rows": rows, "sum": probs.iter().sum::<f64>() }).to_string()
}

/// `outcomes` is a string of `s`/`f` characters, one per logged task.
/// Returns `{"successes": n, "failures": n, "picked": [indices]}`.
#[wasm_bindgen]
pub fn stratified_pick(outcomes: &str, k: usize, seed: u64) -> String {
    let mut entries = Vec::new();
    for (i, c) in outcomes.chars().filter(|c| !c.is_whitespace()).enumerate() {
        let feedback = match c {
            's' | 'S' => 1.0,
            'f' | 'F' => 0.0,
            other => return error(format!("unexpected {other:?}: use s or f")),
        };
        entries.push(LogEntry {
            task_id: i.to_string(),
            knowledge: String::new(),
            trajectory: Trajectory {
                task_id: i.to_string(),
                goal: String::new(),
                steps: Vec::new(),
                final_observation: String::new(),
                feedback,
                truncated: false,
                fault: None,
            },
            feedback,
        });
    }
    let s = entries.iter().filter(|e| e.feedback >= 1.0).count();
    let quota = allocate(s, entries.len() - s, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = stratified_log_sample(&entries, k, &mut rng, 1.0)
        .iter()
        .map(|e| e.task_id.parse().expect("index ids"))
        .collect();
    json!({ "successes": quota.successes, "failures": quota.failures, "picked": picked }).to_string()
}

/// One playable episode of a built-in environment.
#[wasm_bindgen]
pub struct Game {
    env: EnvInstance,
    last: String,
    done: bool,
}

#[wasm_bindgen]
impl Game {
    #[wasm_bindgen(constructor)]
    pub fn new(family: &str, seed: u64) -> Result<Game, String> {
        let env = make_env(family, seed).map_err(|e| e.to_string())?;
        let last = env.initial().observation.clone();
        Ok(Game { env, last, done: false })
    }

    pub fn goal(&self) -> String {
        self.env.initial().goal.clone()
    }

    pub fn observation(&self) -> String {
        self.last.clone()
    }

    pub fn steps_taken(&self) -> usize {
        self.env.step_count()
    }

    pub fn max_steps(&self) -> usize {
        self.env.max_steps
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn score(&self) -> f64 {
        self.env.score()
    }

    /// Returns `{"observation", "done", "score"}` where `score` is null until
    /// the episode ends.
    pub fn act(&mut self, action: &str) -> String {
        if self.done {
            return error("episode is over");
        }
        match self.env.step(action) {
            Ok(r) => {
                self.last = r.observation.clone();
                self.done = r.done;
                json!({ "observation": r.observation, "done": r.done, "score": r.score_if_done }).to_string()
            }
            Err(e) => error(e),
        }
    }
}
