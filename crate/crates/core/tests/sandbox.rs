mod common;

use std::time::Instant;

use common::*;
use memarch::environments::{Step, Trajectory};
use memarch::provider::{Caller, MockEntry, Phase, Price, PriceTable};
use memarch::sandbox::{FaultKind, HandleState, Sandbox, SandboxLimits, TaskState};
use memarch::Error;
use serde_json::{json, Value};

fn trajectory(task: &str) -> Trajectory {
    Trajectory {
        task_id: task.into(),
        goal: format!("goal of {task}"),
        steps: vec![Step {
            observation: "You see a wall.".into(),
            action: "look".into(),
        }],
        final_observation: "Nothing happens.".into(),
        feedback: 0.0,
        truncated: false,
        fault: None,
    }
}

fn state(goal: &str) -> TaskState {
    TaskState {
        goal: goal.into(),
        observation: "start".into(),
    }
}

fn fault_kind(err: Error) -> FaultKind {
    match err {
        Error::Design(f) => f.kind,
        other => panic!("expected a design fault, got {other}"),
    }
}

fn misbehaving(on: &str, action: &str) -> Value {
    design(
        &format!("{on}-{action}"),
        json!([{"name": "m", "kind": "misbehave", "on": on, "action": action, "message": "boom"}]),
    )
}

#[test]
fn null_design_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "null", &serde_json::from_str(memarch::builtin::shipped("null").unwrap()).unwrap());
    let mut h = sb.spawn("null", &artifact).unwrap();
    h.call_update(&trajectory("t0"), 1.0).unwrap();
    assert_eq!(h.call_retrieve(&state("g")).unwrap(), "");
    h.terminate();
    assert_eq!(h.state(), HandleState::Dead);
    h.terminate();
}

#[test]
fn scratch_dirs_count_up() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "null", &design("n", json!([{"name": "e", "kind": "null"}])));
    let a = sb.spawn("d1", &artifact).unwrap();
    let b = sb.spawn("d1", &artifact).unwrap();
    assert!(a.scratch_dir().ends_with("d1/run-1"));
    assert!(b.scratch_dir().ends_with("d1/run-2"));
}

#[test]
fn feedback_outside_unit_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "rec", &design("rec", json!([{"name": "log", "kind": "recorder"}])));
    let mut h = sb.spawn("rec", &artifact).unwrap();
    assert_eq!(h.call_update(&trajectory("t"), 1.5).unwrap_err().kind(), "usage");
    // The request never reached the design.
    assert_eq!(h.call_retrieve(&state("g")).unwrap(), r#"{"order":[],"updates":0}"#);
}

#[test]
fn garbage_line_is_protocol_fault() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "g", &misbehaving("retrieve", "garbage"));
    let mut h = sb.spawn("g", &artifact).unwrap();
    let err = h.call_retrieve(&state("g")).unwrap_err();
    let Error::Design(fault) = err else { panic!() };
    assert_eq!(fault.kind, FaultKind::Protocol);
    assert!(fault.transcript.iter().any(|l| l.contains("this is not a protocol message")));
    assert!(fault.report().contains("--- transcript ---"));
    assert_eq!(h.state(), HandleState::Dead);
    assert_eq!(fault_kind(h.call_retrieve(&state("g")).unwrap_err()), FaultKind::Dead);
}

#[test]
fn hang_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let limits = SandboxLimits {
        call_timeout_ms: 300,
        ..fast_limits()
    };
    let sb = Sandbox::new(dir.path().join("sandbox"), memarch::sandbox::RuntimeConfig::with_host(host()), limits);
    let artifact = write_design(dir.path(), "h", &misbehaving("update", "hang"));
    let mut h = sb.spawn("h", &artifact).unwrap();
    let started = Instant::now();
    assert_eq!(fault_kind(h.call_update(&trajectory("t"), 0.0).unwrap_err()), FaultKind::Timeout);
    assert!(started.elapsed().as_secs_f64() < 3.0);
}

#[test]
fn crash_is_reported_with_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "c", &misbehaving("update", "crash"));
    let mut h = sb.spawn("c", &artifact).unwrap();
    let Error::Design(fault) = h.call_update(&trajectory("t"), 0.0).unwrap_err() else { panic!() };
    assert_eq!(fault.kind, FaultKind::Crashed);
    assert!(fault.report().contains("boom"));
}

#[test]
fn crash_before_init() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "s", &misbehaving("start", "crash"));
    assert_eq!(fault_kind(sb.spawn("s", &artifact).unwrap_err()), FaultKind::Crashed);
}

#[test]
fn oversize_message_is_fault() {
    let dir = tempfile::tempdir().unwrap();
    let limits = SandboxLimits {
        max_message_bytes: 4096,
        ..fast_limits()
    };
    let sb = Sandbox::new(dir.path().join("sandbox"), memarch::sandbox::RuntimeConfig::with_host(host()), limits);
    let artifact = write_design(dir.path(), "o", &misbehaving("retrieve", "oversize"));
    let mut h = sb.spawn("o", &artifact).unwrap();
    assert_eq!(fault_kind(h.call_retrieve(&state("g")).unwrap_err()), FaultKind::MessageTooLarge);
}

#[test]
fn stray_line_breaks_one_in_flight() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "x", &misbehaving("update", "stray"));
    let mut h = sb.spawn("x", &artifact).unwrap();
    h.call_update(&trajectory("t"), 0.0).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(100));
    assert_eq!(fault_kind(h.call_retrieve(&state("g")).unwrap_err()), FaultKind::Protocol);
}

#[test]
fn design_error_is_surfaced() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "e", &misbehaving("retrieve", "error"));
    let mut h = sb.spawn("e", &artifact).unwrap();
    let Error::Design(fault) = h.call_retrieve(&state("g")).unwrap_err() else { panic!() };
    assert_eq!(fault.kind, FaultKind::DesignError);
    assert!(fault.detail.contains("boom"));
}

#[test]
fn unknown_artifact_kind_is_spawn_fault() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let path = dir.path().join("design.py");
    std::fs::write(&path, "def general_update(): pass\ndef general_retrieve(): pass\n").unwrap();
    // No python runtime is configured.
    assert_eq!(fault_kind(sb.spawn("py", &path).unwrap_err()), FaultKind::Spawn);
}

#[test]
fn environment_is_cleared_and_cwd_is_scratch() {
    std::env::set_var("MEMARCH_TEST_SECRET", "hunter2");
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "p", &design("p", json!([{"name": "probe", "kind": "probe"}])));
    let mut h = sb.spawn("p", &artifact).unwrap();
    let report: Value = serde_json::from_str(&h.call_retrieve(&state("g")).unwrap()).unwrap();
    assert_eq!(report["env"], json!([]));
    let cwd = std::path::PathBuf::from(report["cwd"].as_str().unwrap());
    assert_eq!(cwd.canonicalize().unwrap(), h.scratch_dir().canonicalize().unwrap());
}

#[test]
fn snapshot_round_trip_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "rec", &design("rec", json!([{"name": "log", "kind": "recorder"}])));
    let mut h = sb.spawn("rec", &artifact).unwrap();
    h.call_update(&trajectory("a"), 1.0).unwrap();
    let before = h.call_retrieve(&state("g")).unwrap();
    let snap = h.call_snapshot().unwrap().expect("recorder supports snapshots");
    h.call_update(&trajectory("b"), 1.0).unwrap();
    assert_ne!(h.call_retrieve(&state("g")).unwrap(), before);
    h.call_restore(&snap).unwrap();
    assert_eq!(h.call_retrieve(&state("g")).unwrap(), before);
    assert_eq!(fault_kind(h.call_restore("snap-999").unwrap_err()), FaultKind::DesignError);
}

#[test]
fn snapshot_unsupported_maps_to_none() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let mut spec = design("rec", json!([{"name": "log", "kind": "recorder"}]));
    spec["supports_snapshot"] = json!(false);
    let artifact = write_design(dir.path(), "rec", &spec);
    let mut h = sb.spawn("rec", &artifact).unwrap();
    assert_eq!(h.call_snapshot().unwrap(), None);
    // The session stays usable.
    h.call_update(&trajectory("a"), 1.0).unwrap();
}

#[test]
fn model_calls_are_proxied_and_attributed() {
    let dir = tempfile::tempdir().unwrap();
    let prices = PriceTable::uniform(Price {
        input_micros: 2,
        output_micros: 5,
    });
    let provider = mock_provider(
        vec![MockEntry::new("Current cheatsheet", "SHEET v1").with_usage(40, 3)],
        prices,
    );
    let sb = sandbox(&dir.path().join("sandbox")).with_provider(provider.clone());
    let spec = design("cs", json!([{"name": "sheet", "kind": "cheatsheet", "prompt": "Current cheatsheet: {{cheatsheet}}\n{{trajectory}}"}]));
    let artifact = write_design(dir.path(), "cs", &spec);
    let mut h = sb.spawn("cs", &artifact).unwrap();
    h.set_phase(Phase::Collection);
    h.call_update(&trajectory("a"), 1.0).unwrap();
    h.set_phase(Phase::Deployment);
    assert_eq!(h.call_retrieve(&state("g")).unwrap(), "SHEET v1");
    let ledger = provider.ledger();
    assert_eq!(ledger.entries().len(), 1);
    let entry = &ledger.entries()[0];
    assert_eq!(entry.caller, Caller::MemoryDesign);
    assert_eq!(entry.phase, Phase::Collection);
    assert_eq!(entry.tag, "cs");
    assert_eq!(entry.usage.cost_micros, 40 * 2 + 3 * 5);
    assert!(h.transcript().iter().any(|l| l.contains("model_call")));
}

#[test]
fn model_fault_degrades_cheatsheet() {
    let dir = tempfile::tempdir().unwrap();
    // Strict mock with no script: every model call faults.
    let provider = mock_provider(Vec::new(), PriceTable::default());
    let sb = sandbox(&dir.path().join("sandbox")).with_provider(provider);
    let artifact = write_design(dir.path(), "cs", &design("cs", json!([{"name": "sheet", "kind": "cheatsheet"}])));
    let mut h = sb.spawn("cs", &artifact).unwrap();
    h.call_update(&trajectory("a"), 1.0).unwrap();
    assert_eq!(h.call_retrieve(&state("g")).unwrap(), "");
}

#[test]
fn init_error_is_a_design_fault() {
    let dir = tempfile::tempdir().unwrap();
    let sb = sandbox(&dir.path().join("sandbox"));
    let artifact = write_design(dir.path(), "i", &misbehaving("init", "error"));
    let Error::Design(fault) = sb.spawn("i", &artifact).unwrap_err() else { panic!() };
    assert_eq!(fault.kind, FaultKind::DesignError);
    assert!(fault.detail.contains("boom"));
}
