mod common;

use common::*;
use memarch::environments::PolicyAgent;
use memarch::evaluation::{
    evaluate, no_memory_run, split_tasks, trial_run, write_report, EvaluationReport, Harness, Mode,
};
use memarch::provider::{end_to_end_memory_cost, Caller, LedgerEntry, MockEntry, ModelProvider, Phase, Price, PriceTable};
use memarch::sandbox::ArtifactLauncher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn recorder(snapshots: bool) -> Value {
    let mut spec = design("recorder", json!([{"name": "log", "kind": "recorder"}]));
    spec["supports_snapshot"] = json!(snapshots);
    spec
}

fn knowledge(report: &EvaluationReport, repeat: usize) -> Vec<(usize, Vec<String>)> {
    report.per_task[repeat]
        .iter()
        .map(|e| {
            let v: Value = serde_json::from_str(&e.knowledge).unwrap();
            let order = v["order"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
            (v["updates"].as_u64().unwrap() as usize, order)
        })
        .collect()
}

fn run(spec: &Value, mode: Mode, repeats: usize) -> EvaluationReport {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "d", spec);
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let launcher = ArtifactLauncher::new(&sb, "d", artifact);
    evaluate(&harness, &launcher, &tasks("keydoor", 8), mode, repeats).unwrap()
}

fn ids(range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("keydoor-{i}")).collect()
}

#[test]
fn split_is_floor_half() {
    for n in 2..12 {
        let (c, d) = split_tasks(&tasks("keydoor", n)).unwrap();
        assert_eq!(c.len(), n / 2);
        assert_eq!(d.len(), n - n / 2);
    }
    assert!(split_tasks(&tasks("keydoor", 1)).is_err());
}

#[test]
fn collection_updates_follow_task_order() {
    let report = run(&recorder(true), Mode::Static, 1);
    assert_eq!(report.collection_tasks, ids(0..4));
    assert_eq!(report.deployment_tasks, ids(4..8));
    for (updates, order) in knowledge(&report, 0) {
        assert_eq!(updates, 4);
        assert_eq!(order, ids(0..4));
    }
}

#[test]
fn static_deployment_never_updates() {
    let report = run(&recorder(true), Mode::Static, 3);
    assert_eq!(report.per_task.len(), 3);
    for r in 0..3 {
        assert!(knowledge(&report, r).iter().all(|(n, _)| *n == 4));
    }
}

#[test]
fn dynamic_deployment_sees_prior_updates() {
    for snapshots in [true, false] {
        let report = run(&recorder(snapshots), Mode::Dynamic, 1);
        for (i, (updates, order)) in knowledge(&report, 0).into_iter().enumerate() {
            assert_eq!(updates, 4 + i, "snapshots={snapshots}");
            let mut expected = ids(0..4);
            expected.extend(ids(4..4 + i));
            assert_eq!(order, expected);
        }
    }
}

#[test]
fn dynamic_repeats_start_from_the_same_state() {
    for snapshots in [true, false] {
        let report = run(&recorder(snapshots), Mode::Dynamic, 3);
        let first = knowledge(&report, 0);
        for r in 1..3 {
            assert_eq!(knowledge(&report, r), first, "snapshots={snapshots}");
        }
        assert_eq!(report.standard_error, 0.0);
    }
}

#[test]
fn null_design_matches_no_memory() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "null", &serde_json::from_str(memarch::builtin::shipped("null").unwrap()).unwrap());
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    for family in ["keydoor", "hintgate", "recipe"] {
        let ts = tasks(family, 10);
        let with = evaluate(&harness, &ArtifactLauncher::new(&sb, "null", &artifact), &ts, Mode::Static, 2).unwrap();
        let without = no_memory_run(&harness, &ts, 2).unwrap();
        assert_eq!(with.mean_score, without.mean_score, "{family}");
        assert_eq!(with.repeat_means, without.repeat_means);
    }
}

#[test]
fn retrieve_fault_degrades_to_empty_knowledge() {
    let spec = design(
        "flaky",
        json!([
            {"name": "hints", "kind": "hint_recorder", "capacity": 8},
            {"name": "m", "kind": "misbehave", "on": "retrieve", "after": 1, "action": "error", "message": "IndexError"}
        ]),
    );
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "d", &spec);
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let report = evaluate(&harness, &ArtifactLauncher::new(&sb, "d", artifact), &tasks("hintgate", 20), Mode::Static, 1).unwrap();
    // First retrieve succeeds, the other nine fault and run without knowledge.
    assert_eq!(report.faults.len(), 9);
    assert!(report.faults.iter().all(|f| f.operation == "retrieve"));
    assert_eq!(report.per_task[0][0].feedback, 1.0);
    assert!(report.per_task[0][1..].iter().all(|e| e.knowledge.is_empty() && e.feedback == 0.0));
}

#[test]
fn collection_fault_is_an_error() {
    let spec = design("bad", json!([{"name": "m", "kind": "misbehave", "on": "update", "after": 2, "action": "crash"}]));
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "d", &spec);
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let err = evaluate(&harness, &ArtifactLauncher::new(&sb, "d", artifact), &tasks("keydoor", 8), Mode::Static, 1).unwrap_err();
    assert_eq!(err.kind(), "design");
}

#[test]
fn trial_uses_two_collection_and_three_deployment_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "d", &recorder(true));
    let policy = PolicyAgent::default();
    let provider = ModelProvider::offline();
    let harness = Harness::new(&policy, &provider);
    let launcher = ArtifactLauncher::new(&sb, "d", artifact);
    let pool = tasks("keydoor", 20);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trial = trial_run(&harness, &launcher, &pool, &mut rng).unwrap();
        assert!(trial.passed());
        assert_eq!(trial.collection.len(), 2);
        assert_eq!(trial.deployment.len(), 3);
        let mut all = trial.collection.clone();
        all.extend(trial.deployment.clone());
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 5);
    }
    let bad = write_design(dir.path(), "bad", &design("bad", json!([{"name": "m", "kind": "misbehave", "on": "retrieve", "action": "garbage"}])));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trial = trial_run(&harness, &ArtifactLauncher::new(&sb, "bad", bad), &pool, &mut rng).unwrap();
    assert!(!trial.passed());
    assert!(trial_run(&harness, &launcher, &pool[..4], &mut rng).is_err());
}

#[test]
fn cost_report_refolds_from_ledger_file() {
    let dir = tempfile::tempdir().unwrap();
    let prices = PriceTable {
        chat: Price { input_micros: 3, output_micros: 11 },
        reasoning: Price::default(),
        embedding: Price { input_micros: 1, output_micros: 0 },
    };
    let provider = mock_provider(vec![MockEntry::new("cheatsheet", "merged notes").with_usage(50, 7)], prices);
    let sb = sandbox(&dir.path().join("sandbox"));
    let spec = design(
        "both",
        json!([
            {"name": "sheet", "kind": "cheatsheet"},
            {"name": "episodes", "kind": "trajectory_store", "embedder": "model"}
        ]),
    );
    let artifact = write_design(dir.path(), "d", &spec);
    let policy = PolicyAgent::default();
    let harness = Harness::new(&policy, &provider);
    let report = evaluate(&harness, &ArtifactLauncher::new(&sb, "d", artifact), &tasks("keydoor", 8), Mode::Dynamic, 2).unwrap();
    write_report(&dir.path().join("out"), &report).unwrap();

    let text = std::fs::read_to_string(dir.path().join("out/ledger.jsonl")).unwrap();
    let entries: Vec<LedgerEntry> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let refold: u64 = entries
        .iter()
        .filter(|e| e.caller == Caller::MemoryDesign && matches!(e.phase, Phase::Collection | Phase::Deployment))
        .map(|e| e.usage.cost_micros)
        .sum();
    assert!(refold > 0);
    assert_eq!(report.cost.end_to_end_memory_cost_micros, refold);
    assert_eq!(end_to_end_memory_cost(&report.cost.ledger), refold);
    assert_eq!(
        report.cost.memory_collection_micros + report.cost.memory_deployment_micros,
        refold
    );
    // Collected into the caller's ledger as well.
    assert_eq!(end_to_end_memory_cost(&provider.ledger()), refold);
}
