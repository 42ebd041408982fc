//! One PASS/FAIL line per acceptance criterion, with wall time against its
//! budget. Runs without the libtest harness so the lines always print.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use memarch::archive::{
    allocate, normalize_performance, record_score, sampling_distribution, stratified_log_sample, Archive, ArchiveDir,
    DesignRecord, LogEntry, SamplingParams, Status, Strategy,
};
use memarch::environments::{ChatPolicy, PolicyAgent, Trajectory};
use memarch::evaluation::{evaluate, no_memory_run, trial_run, EvaluationReport, Harness, Mode};
use memarch::meta::{CandidateOutcome, RunOutcome};
use memarch::provider::{MockEntry, ModelProvider, Price};
use memarch::report::cmd_learn;
use memarch::sandbox::ArtifactLauncher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const PLAN: &str = r#"{"reflection":"r","idea":"i","trajectory_score_assessment":"a","suggested_changes":"s"}"#;
const PLAN_MATCH: &str = "## Task: plan a memory design";
const IMPLEMENT: &str = "## Task: implement a memory design";

fn fenced(spec: &Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(spec).unwrap())
}

fn write_script(dir: &Path, entries: &[MockEntry]) -> std::path::PathBuf {
    let path = dir.join("script.jsonl");
    let text: String = entries.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
    std::fs::write(&path, text).unwrap();
    path
}

// ---- 1 ----

fn oracle(scores: &[f64], visits: &[u64], p: &SamplingParams) -> Vec<f64> {
    let j: Vec<f64> = scores
        .iter()
        .zip(visits)
        .map(|(&s, &t)| 0.5 * (1.0 + (0.5 * p.lambda * (s - p.baseline_score)).tanh()) - p.alpha * (1.0 + t as f64).ln())
        .collect();
    j.iter()
        .map(|ji| 1.0 / j.iter().map(|jj| ((jj - ji) / p.temperature).exp()).sum::<f64>())
        .collect()
}

fn build(scores: &[f64], visits: &[u64], p: &SamplingParams) -> Archive {
    let mut a = Archive::new(p.clone());
    for (i, &s) in scores.iter().enumerate() {
        a.insert(DesignRecord::valid(format!("d{i}"), None, format!("designs/d{i}/design.json"), s, Vec::new()))
            .unwrap();
        for _ in 0..visits[i] {
            a.increment_visits(&[format!("d{i}")]).unwrap();
        }
    }
    a
}

fn random_archive(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u64>) {
    let n = rng.gen_range(1..=20);
    let scores = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let visits = (0..n).map(|_| rng.gen_range(0..50)).collect();
    (scores, visits)
}

fn sampling_math() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let (scores, visits) = random_archive(&mut rng);
        let p = SamplingParams {
            baseline_score: rng.gen_range(0.0..=1.0),
            lambda: rng.gen_range(0.1..=5.0),
            alpha: rng.gen_range(0.0..=2.0),
            temperature: rng.gen_range(0.05..=3.0),
            ..SamplingParams::default()
        };
        let got = build(&scores, &visits, &p).distribution().unwrap();
        for (g, w) in got.iter().zip(oracle(&scores, &visits, &p)) {
            assert!((g - w).abs() < 1e-9, "case {case}: {g} vs {w}");
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12, "case {case}");
        for (&s, &t) in scores.iter().zip(&visits) {
            let direct = 1.0 / (1.0 + (-p.lambda * (s - p.baseline_score)).exp());
            assert!((normalize_performance(s, &p) - direct).abs() < 1e-15);
            assert!((record_score(s, t, &p) - (direct - p.alpha * (t as f64).ln_1p())).abs() < 1e-15);
        }
        let js: Vec<f64> = scores.iter().zip(&visits).map(|(&s, &t)| record_score(s, t, &p)).collect();
        let shift = rng.gen_range(-100.0..100.0);
        let shifted: Vec<f64> = js.iter().map(|j| j + shift).collect();
        let moved = sampling_distribution(&shifted, p.temperature).unwrap();
        for (a, b) in got.iter().zip(&moved) {
            assert!((a - b).abs() < 1e-9, "shift, case {case}");
        }
        let top = (0..js.len()).fold(0, |best, i| if js[i] > js[best] { i } else { best });
        assert!(got.iter().all(|q| *q <= got[top]), "argmax, case {case}");
    }
}

// ---- 2 ----

fn monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = SamplingParams::default();
    let mut cases = 0;
    while cases < 500 {
        let (scores, visits) = random_archive(&mut rng);
        if scores.len() < 2 {
            continue;
        }
        cases += 1;
        let i = rng.gen_range(0..scores.len());
        let before = build(&scores, &visits, &p).distribution().unwrap()[i];
        let mut more = visits.clone();
        more[i] += 1;
        assert!(build(&scores, &more, &p).distribution().unwrap()[i] < before);
        let mut better = scores.clone();
        better[i] = (better[i] + rng.gen_range(0.01..0.5)).min(1.0);
        if better[i] > scores[i] {
            assert!(build(&better, &visits, &p).distribution().unwrap()[i] > before);
        }
    }
}

// ---- 3 ----

fn brute_force(successes: usize, failures: usize, k: usize) -> (usize, usize) {
    let n = successes + failures;
    if k >= n {
        return (successes, failures);
    }
    let mut best: Option<(usize, usize)> = None;
    for s in 0..=k.min(successes) {
        let f = k - s;
        if f > failures || (k >= 2 && ((successes > 0 && s == 0) || (failures > 0 && f == 0))) {
            continue;
        }
        let dist = (s * n).abs_diff(k * successes);
        if best.is_none_or(|(bd, _)| dist <= bd) {
            best = Some((dist, s));
        }
    }
    let s = best.unwrap().1;
    (s, k - s)
}

fn log_entry(i: usize, success: bool) -> LogEntry {
    let feedback = if success { 1.0 } else { 0.0 };
    LogEntry {
        task_id: format!("t{i}"),
        knowledge: String::new(),
        trajectory: Trajectory {
            task_id: format!("t{i}"),
            goal: String::new(),
            steps: Vec::new(),
            final_observation: String::new(),
            feedback,
            truncated: false,
            fault: None,
        },
        feedback,
    }
}

fn stratified() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..=12usize {
        for mask in 0u32..(1 << n) {
            let entries: Vec<LogEntry> = (0..n).map(|i| log_entry(i, mask & (1 << i) != 0)).collect();
            let s = mask.count_ones() as usize;
            for k in 0..=8 {
                let want = brute_force(s, n - s, k);
                let a = allocate(s, n - s, k);
                assert_eq!((a.successes, a.failures), want, "S={s} F={} k={k}", n - s);
                let picked = stratified_log_sample(&entries, k, &mut rng, 1.0);
                let got_s = picked.iter().filter(|e| e.feedback >= 1.0).count();
                assert_eq!((got_s, picked.len() - got_s), want);
                let idx: Vec<usize> = picked.iter().map(|e| e.task_id[1..].parse().unwrap()).collect();
                assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

// ---- 4 ----

fn keydoor_run(out: &Path, script: &Path) -> RunOutcome {
    let loaded = config_in(out, |c| {
        c.environment.tasks = 10;
        c.evaluation.repeats = 2;
        c.learning.steps = 3;
        c.learning.candidates_per_step = 2;
        c.learning.max_parallel = 2;
        c.learning.repeats = 2;
        c.learning.mode = Mode::Dynamic;
        c.learning.seed = 11;
        c.provider.script = Some(script.to_path_buf());
    });
    cmd_learn(&loaded).unwrap()
}

fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries = vec![MockEntry::new(PLAN_MATCH, PLAN).with_usage(1200, 80)];
    for capacity in 1..=6 {
        let spec = design(&format!("hints-{capacity}"), json!([
            {"name": "log", "kind": "recorder"},
            {"name": "hints", "kind": "hint_recorder", "capacity": capacity}
        ]));
        entries.push(MockEntry::new(IMPLEMENT, fenced(&spec)).with_usage(900, 150));
    }
    let script = write_script(dir.path(), &entries);
    let out = dir.path().join("runs");
    let first = keydoor_run(&out, &script);
    std::fs::rename(&out, dir.path().join("first")).unwrap();
    let second = keydoor_run(&out, &script);
    assert_eq!(first.summary, second.summary);
    assert!(first.archive.len() > 1);
    let a = snapshot_tree(&dir.path().join("first/run"), &[]);
    let b = snapshot_tree(&out.join("run"), &[]);
    assert!(!a.is_empty());
    assert_eq!(a.iter().map(|f| &f.0).collect::<Vec<_>>(), b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
}

// ---- 5 ----

fn recorder_knowledge(report: &EvaluationReport, repeat: usize) -> Vec<(usize, Vec<String>)> {
    report.per_task[repeat]
        .iter()
        .map(|e| {
            let v: Value = serde_json::from_str(&e.knowledge).unwrap();
            let order = v["order"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
            (v["updates"].as_u64().unwrap() as usize, order)
        })
        .collect()
}

fn evaluation_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let ts = tasks("keydoor", 8);
    let ids = |r: std::ops::Range<usize>| r.map(|i| format!("keydoor-{i}")).collect::<Vec<_>>();
    for snapshots in [true, false] {
        let mut spec = design("recorder", json!([{"name": "log", "kind": "recorder"}]));
        spec["supports_snapshot"] = json!(snapshots);
        let artifact = write_design(dir.path(), &format!("rec-{snapshots}"), &spec);
        let launcher = ArtifactLauncher::new(&sb, "rec", &artifact);

        let stat = evaluate(&harness, &launcher, &ts, Mode::Static, 2).unwrap();
        for r in 0..2 {
            for (updates, order) in recorder_knowledge(&stat, r) {
                assert_eq!(updates, 4);
                assert_eq!(order, ids(0..4));
            }
        }
        let dynamic = evaluate(&harness, &launcher, &ts, Mode::Dynamic, 3).unwrap();
        let first = recorder_knowledge(&dynamic, 0);
        for (i, (updates, order)) in first.iter().enumerate() {
            assert_eq!(*updates, 4 + i);
            let mut expected = ids(0..4);
            expected.extend(ids(4..4 + i));
            assert_eq!(order, &expected);
        }
        for r in 1..3 {
            assert_eq!(recorder_knowledge(&dynamic, r), first);
        }
    }
}

// ---- 6 ----

fn memory_benefit() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(
        dir.path(),
        "hint-recorder",
        &serde_json::from_str(memarch::builtin::shipped("hint-recorder").unwrap()).unwrap(),
    );
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    // 20 tasks: the first 10 collect, the 10 deployment tasks are scored.
    let ts = tasks("hintgate", 20);
    let without = no_memory_run(&harness, &ts, 1).unwrap();
    assert_eq!(without.successes(1.0), (0, 10));
    let with = evaluate(&harness, &ArtifactLauncher::new(&sb, "hint-recorder", &artifact), &ts, Mode::Static, 1).unwrap();
    assert_eq!(with.successes(1.0), (10, 10));
}

// ---- 7 ----

fn node_of(outcome: &RunOutcome, run_root: &Path, design_id: &str) -> String {
    let record = outcome.archive.get(design_id).unwrap();
    let path = ArchiveDir::new(run_root.join("archive")).resolve(&record.artifact_ref);
    let spec: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let description = spec["description"].as_str().unwrap_or_default();
    description.split(']').next().unwrap_or_default().trim_start_matches("[node ").to_string()
}

fn greedy_vs_weighted() {
    let dir = tempfile::tempdir().unwrap();
    let greedy_out = dir.path().join("greedy");
    let greedy = cmd_learn(&landscape(&greedy_out, |c| c.sampling.strategy = Strategy::Greedy)).unwrap();
    assert_eq!(greedy.best.score, 0.6);
    assert_eq!(node_of(&greedy, &greedy_out.join("deceptive"), &greedy.best.design_id), "A");

    let weighted_out = dir.path().join("weighted");
    let weighted = cmd_learn(&landscape(&weighted_out, |c| c.sampling.strategy = Strategy::Weighted)).unwrap();
    assert_eq!(weighted.best.score, 1.0);
    assert_eq!(node_of(&weighted, &weighted_out.join("deceptive"), &weighted.best.design_id), "C");
}

// ---- 8 ----

fn cost_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let sheet = design("sheet", json!([{"name": "sheet", "kind": "cheatsheet"}]));
    let root = write_design(dir.path(), "root", &sheet);
    let mut child = sheet.clone();
    child["name"] = json!("sheet-2");
    let script = write_script(
        dir.path(),
        &[
            MockEntry::new(PLAN_MATCH, PLAN).with_usage(1200, 80),
            MockEntry::new(IMPLEMENT, fenced(&child)).with_usage(900, 150),
            MockEntry::new("You maintain a short cheatsheet", "Take the key first.").with_usage(310, 17),
            MockEntry::new("You are an agent playing a text game", "Action: look").with_usage(120, 3),
        ],
    );
    let chat = Price { input_micros: 2, output_micros: 9 };
    let reasoning = Price { input_micros: 5, output_micros: 21 };
    for seed in [0u64, 1, 2] {
        let out = dir.path().join(format!("runs-{seed}"));
        let loaded = config_in(&out, |c| {
            c.environment.tasks = 6;
            c.evaluation.repeats = 1;
            c.learning.steps = 1;
            c.learning.candidates_per_step = 1;
            c.learning.repeats = 2;
            c.learning.seed = seed;
            c.learning.root_design = Some(root.clone());
            c.policy = PolicyAgent::Chat(ChatPolicy::default());
            c.provider.script = Some(script.clone());
            c.prices.chat = chat;
            c.prices.reasoning = reasoning;
        });
        let outcome = cmd_learn(&loaded).unwrap();
        let ledger = std::fs::read_to_string(out.join("run/ledger.jsonl")).unwrap();
        let mut refold = 0u64;
        let mut excluded = 0u64;
        for line in ledger.lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            let price = if v["role"] == "reasoning" { reasoning } else { chat };
            let usage = &v["usage"];
            let cost = usage["input_tokens"].as_u64().unwrap() * price.input_micros
                + usage["output_tokens"].as_u64().unwrap() * price.output_micros;
            assert_eq!(usage["cost_micros"].as_u64().unwrap(), cost);
            let memory = v["caller"] == "memory_design" && (v["phase"] == "collection" || v["phase"] == "deployment");
            if memory {
                refold += cost;
            } else {
                excluded += cost;
            }
        }
        assert!(refold > 0 && outcome.summary.cost.meta_agent_micros > 0 && outcome.summary.cost.policy_micros > 0);
        assert_eq!(outcome.summary.cost.end_to_end_memory_cost_micros, refold);
        assert_eq!(outcome.summary.cost.meta_agent_micros + outcome.summary.cost.policy_micros, excluded);
    }
}

// ---- 9 ----

fn trial_and_debug_budget() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "rec", &design("rec", json!([{"name": "log", "kind": "recorder"}])));
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let launcher = ArtifactLauncher::new(&sb, "rec", &artifact);
    let pool = tasks("keydoor", 20);
    for seed in 0..10 {
        let trial = trial_run(&harness, &launcher, &pool, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!(trial.passed());
        assert_eq!((trial.collection.len(), trial.deployment.len()), (2, 3));
        let mut all = trial.collection.clone();
        all.extend(trial.deployment.clone());
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 5);
    }

    let mut crashing = design("crashy", json!([{"name": "m", "kind": "misbehave", "on": "update", "action": "crash", "message": "boom"}]));
    let first = fenced(&crashing);
    crashing["description"] = json!("still broken");
    let script = write_script(
        dir.path(),
        &[
            MockEntry::new(PLAN_MATCH, PLAN),
            MockEntry::new(IMPLEMENT, first),
            MockEntry::new("## Task: debug a memory design", fenced(&crashing)),
        ],
    );
    let loaded = config_in(&dir.path().join("runs"), |c| {
        c.environment.tasks = 10;
        c.learning.steps = 1;
        c.learning.candidates_per_step = 1;
        c.learning.repeats = 1;
        c.learning.baseline_score = Some(0.5);
        c.provider.script = Some(script.clone());
    });
    let outcome = cmd_learn(&loaded).unwrap();
    let cand = &outcome.steps[0].candidates[0];
    assert_eq!(cand.outcome, CandidateOutcome::Invalid);
    assert_eq!(cand.debug_attempts, 3);
    let record = outcome.archive.get(cand.design_id.as_deref().unwrap()).unwrap();
    assert_eq!((record.status, record.score), (Status::Invalid, 0.0));
    let ledger = std::fs::read_to_string(dir.path().join("runs/run/ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().filter(|l| l.contains("\"tag\":\"debug:")).count(), 3);
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    type Check = (u32, &'static str, u64, fn());
    let checks: &[Check] = &[
        (1, "sampling math matches closed-form oracle", 1, sampling_math),
        (2, "visit penalty and score reward are strictly monotone", 1, monotonicity),
        (3, "stratified log sampling matches brute force", 1, stratified),
        (4, "seeded learning run is byte-identical", 60, determinism),
        (5, "evaluation protocol contracts", 10, evaluation_contracts),
        (6, "hint memory lifts hintgate from 0/10 to 10/10", 30, memory_benefit),
        (7, "greedy stalls at the local optimum, weighted finds the global one", 60, greedy_vs_weighted),
        (8, "end-to-end memory cost equals ledger re-fold", 5, cost_exactness),
        (9, "trial split 2/3 and debug budget of 3", 10, trial_and_debug_budget),
    ];
    // Failures are reported on the verdict line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for &(n, name, budget, check) in checks {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = started.elapsed();
        let verdict = match result {
            Err(payload) => Err(panic_message(payload)),
            Ok(()) if elapsed > Duration::from_secs(budget) => Err(format!("over the {budget} s budget")),
            Ok(()) => Ok(()),
        };
        match verdict {
            Ok(()) => println!("PASS {n}: {name} ({:.2} s)", elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL {n}: {name} ({:.2} s): {reason}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
