#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use memarch::config::{LoadedConfig, RunConfig};
use memarch::environments::{task_set, TaskSpec};
use memarch::provider::{MockBackend, MockEntry, ModelProvider, PriceTable};
use memarch::sandbox::{RuntimeConfig, Sandbox, SandboxLimits};
use serde_json::{json, Value};

pub fn host() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_memarch-design-host"))
}

pub fn cli() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_memarch"))
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fast_limits() -> SandboxLimits {
    SandboxLimits {
        init_timeout_ms: 5_000,
        call_timeout_ms: 5_000,
        grace_ms: 200,
        ..SandboxLimits::default()
    }
}

pub fn sandbox(root: &Path) -> Sandbox {
    Sandbox::new(root, RuntimeConfig::with_host(host()), fast_limits())
}

/// Layered design with the given layers, all used by both entry points
/// unless the layer is named `quiet`.
pub fn design(name: &str, layers: Value) -> Value {
    let names: Vec<String> = layers
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["name"].as_str().unwrap().to_string())
        .collect();
    json!({
        "name": name,
        "layers": layers,
        "general_update": names,
        "general_retrieve": names,
    })
}

pub fn write_design(dir: &Path, name: &str, spec: &Value) -> PathBuf {
    let path = dir.join(name).join("design.json");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path
}

pub fn mock_provider(entries: Vec<MockEntry>, prices: PriceTable) -> ModelProvider {
    ModelProvider::new(Arc::new(MockBackend::new(entries, true)), prices)
}

pub fn tasks(family: &str, n: usize) -> Vec<TaskSpec> {
    task_set(family, n, 0).unwrap()
}

/// Config for a run under `out`, host binary pinned to the test build.
pub fn config_in(out: &Path, mut patch: impl FnMut(&mut RunConfig)) -> LoadedConfig {
    let mut config = RunConfig {
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    config.runtime = RuntimeConfig::with_host(host());
    config.sandbox = fast_limits();
    patch(&mut config);
    config.validate().unwrap();
    let raw = serde_json::to_string_pretty(&config).unwrap();
    LoadedConfig { config, raw }
}

/// The shipped deceptive landscape, re-rooted under `out`.
pub fn landscape(out: &Path, patch: impl FnOnce(&mut RunConfig)) -> LoadedConfig {
    let path = crate_dir().join("landscapes/deceptive/config.json");
    let mut loaded = RunConfig::load(&path).unwrap();
    loaded.config.out = out.to_path_buf();
    loaded.config.runtime = RuntimeConfig::with_host(host());
    loaded.config.sandbox = fast_limits();
    patch(&mut loaded.config);
    loaded
}

/// Relative path -> bytes for every file under `root`, skipping names in
/// `skip`.
pub fn snapshot_tree(root: &Path, skip: &[&str]) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name().to_string_lossy().into_owned();
            if skip.contains(&name.as_str()) {
                continue;
            }
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
