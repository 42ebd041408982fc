//! Sandboxed execution of memory designs.
//!
//! Each design runs as its own process with a cleared environment, its
//! working directory set to a fresh scratch directory
//! (`sandbox/<design_id>/run-<n>/`), and no channel to the outside other than
//! its standard streams. Model access is proxied: a design emits a
//! `model_call` line while servicing a request and the harness answers with
//! `model_result`, recording the usage under `caller = memory_design`.
//! OS-level syscall filtering is left to the deployment.

mod handle;
pub mod protocol;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::environments::Trajectory;
use crate::error::Result;
use crate::provider::{ModelProvider, Phase};

pub use handle::{DesignHandle, HandleState};
pub use protocol::{Request, Response, TaskState, MAX_MESSAGE_BYTES};

pub const HOST_BINARY: &str = "memarch-design-host";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Process could not be started or the artifact is unusable.
    Spawn,
    /// Artifact failed the static entry-point check.
    Conformance,
    Timeout,
    /// Design answered with an `error` response.
    DesignError,
    /// Unparseable, unexpected or unsolicited output.
    Protocol,
    MessageTooLarge,
    /// Process exited while a response was pending.
    Crashed,
    /// Handle was already dead.
    Dead,
    /// Design declined an optional operation (snapshot/restore).
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFault {
    pub design_id: String,
    pub kind: FaultKind,
    pub detail: String,
    /// Recent wire traffic and captured stderr, oldest first.
    pub transcript: Vec<String>,
}

impl DesignFault {
    pub fn new(design_id: impl Into<String>, kind: FaultKind, detail: impl Into<String>) -> Self {
        Self {
            design_id: design_id.into(),
            kind,
            detail: detail.into(),
            transcript: Vec::new(),
        }
    }

    /// Fault summary followed by the transcript, as fed to the debugging
    /// prompt.
    pub fn report(&self) -> String {
        let mut out = format!("{self}\n");
        if !self.transcript.is_empty() {
            out.push_str("--- transcript ---\n");
            for line in &self.transcript {
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for DesignFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "design {} fault ({:?}): {}", self.design_id, self.kind, self.detail)
    }
}

impl std::error::Error for DesignFault {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub init_timeout_ms: u64,
    pub call_timeout_ms: u64,
    pub max_message_bytes: usize,
    /// Total lifetime of one process; `None` for unlimited.
    pub lifetime_ms: Option<u64>,
    /// Wait after `shutdown` before killing.
    pub grace_ms: u64,
    /// Lines kept in the transcript ring buffer.
    pub transcript_lines: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            init_timeout_ms: 30_000,
            call_timeout_ms: 120_000,
            max_message_bytes: MAX_MESSAGE_BYTES,
            lifetime_ms: None,
            grace_ms: 1_000,
            transcript_lines: 200,
        }
    }
}

impl SandboxLimits {
    pub(crate) fn init_timeout(&self) -> Duration {
        Duration::from_millis(self.init_timeout_ms)
    }

    pub(crate) fn call_timeout(&self) -> Duration {
        Duration::from_millis(self.call_timeout_ms)
    }
}

/// How to launch each kind of artifact.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    /// Host for `design.json` artifacts; defaults to the
    /// `memarch-design-host` binary next to the running executable.
    pub host_binary: Option<PathBuf>,
    /// Command prefix for `design.py` artifacts, e.g.
    /// `["/usr/bin/python3", "-m", "memdesign_runtime"]`.
    pub python: Vec<String>,
}

impl RuntimeConfig {
    pub fn with_host(host: impl Into<PathBuf>) -> Self {
        Self {
            host_binary: Some(host.into()),
            python: Vec::new(),
        }
    }

    pub fn resolve_host(&self) -> Option<PathBuf> {
        if let Some(host) = &self.host_binary {
            return Some(host.clone());
        }
        let exe = std::env::current_exe().ok()?;
        let dir = exe.parent()?;
        let name = format!("{HOST_BINARY}{}", std::env::consts::EXE_SUFFIX);
        [dir.join(&name), dir.parent()?.join(&name)].into_iter().find(|p| p.is_file())
    }

    /// Command line for an artifact, chosen by file name.
    pub fn command_for(&self, artifact: &Path) -> std::result::Result<Vec<String>, String> {
        let path = artifact.to_string_lossy().into_owned();
        match artifact.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let host = self
                    .resolve_host()
                    .ok_or_else(|| format!("cannot locate the {HOST_BINARY} binary"))?;
                Ok(vec![host.to_string_lossy().into_owned(), "--design".into(), path])
            }
            Some("py") => {
                if self.python.is_empty() {
                    return Err("no python runtime configured for .py designs".into());
                }
                let mut argv = self.python.clone();
                argv.push(path);
                Ok(argv)
            }
            _ => Err(format!("unsupported artifact type: {path}")),
        }
    }
}

/// Spawns design processes and hands out scratch directories.
#[derive(Debug)]
pub struct Sandbox {
    root: PathBuf,
    runtime: RuntimeConfig,
    limits: SandboxLimits,
    provider: Option<ModelProvider>,
    runs: Mutex<HashMap<String, u32>>,
}

impl Sandbox {
    /// `root` is the `sandbox/` directory.
    pub fn new(root: impl Into<PathBuf>, runtime: RuntimeConfig, limits: SandboxLimits) -> Self {
        Self {
            root: root.into(),
            runtime,
            limits,
            provider: None,
            runs: Mutex::new(HashMap::new()),
        }
    }

    /// Routes design `model_call`s to `provider`.
    pub fn with_provider(mut self, provider: ModelProvider) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn next_scratch(&self, design_id: &str) -> PathBuf {
        let base = self.root.join(design_id);
        let mut runs = self.runs.lock().expect("run table lock");
        let n = runs.entry(design_id.to_string()).or_insert_with(|| {
            std::fs::read_dir(&base)
                .map(|rd| {
                    rd.filter_map(|e| e.ok())
                        .filter(|e| e.file_name().to_string_lossy().starts_with("run-"))
                        .count() as u32
                })
                .unwrap_or(0)
        });
        *n += 1;
        base.join(format!("run-{n}"))
    }

    /// Starts the artifact and completes the `init` exchange.
    pub fn spawn(&self, design_id: &str, artifact: &Path) -> Result<DesignHandle> {
        self.spawn_with(design_id, artifact, self.provider.clone())
    }

    /// Like [`Sandbox::spawn`] with an explicit provider for model calls.
    pub fn spawn_with(&self, design_id: &str, artifact: &Path, provider: Option<ModelProvider>) -> Result<DesignHandle> {
        // The child runs inside its scratch dir, so relative paths would break.
        let spawn_fault = |detail: String| DesignFault::new(design_id, FaultKind::Spawn, detail);
        let artifact = std::path::absolute(artifact).map_err(|e| spawn_fault(e.to_string()))?;
        let argv = self.runtime.command_for(&artifact).map_err(spawn_fault)?;
        let scratch = std::path::absolute(self.next_scratch(design_id)).map_err(|e| spawn_fault(e.to_string()))?;
        DesignHandle::spawn(design_id, &argv, &scratch, self.limits, provider)
    }
}

/// What the evaluation protocol needs from a running design.
pub trait DesignSession: Send {
    fn design_id(&self) -> &str;
    /// Phase used to attribute model calls made by the design.
    fn set_phase(&mut self, phase: Phase);
    fn update(&mut self, trajectory: &Trajectory, feedback: f64) -> Result<()>;
    fn retrieve(&mut self, state: &TaskState) -> Result<String>;
    /// `Ok(None)` when the design does not support snapshots.
    fn snapshot(&mut self) -> Result<Option<String>>;
    fn restore(&mut self, snapshot_id: &str) -> Result<()>;
    fn transcript(&self) -> Vec<String>;
}

/// Produces fresh sessions of one design. Model calls made by the session
/// are charged to `provider`.
pub trait DesignLauncher: Sync {
    fn design_id(&self) -> &str;
    fn launch(&self, provider: &ModelProvider) -> Result<Box<dyn DesignSession>>;
}

/// Launches an artifact file through a [`Sandbox`].
#[derive(Debug)]
pub struct ArtifactLauncher<'a> {
    pub sandbox: &'a Sandbox,
    pub design_id: String,
    pub artifact: PathBuf,
}

impl<'a> ArtifactLauncher<'a> {
    pub fn new(sandbox: &'a Sandbox, design_id: impl Into<String>, artifact: impl Into<PathBuf>) -> Self {
        Self {
            sandbox,
            design_id: design_id.into(),
            artifact: artifact.into(),
        }
    }
}

impl DesignLauncher for ArtifactLauncher<'_> {
    fn design_id(&self) -> &str {
        &self.design_id
    }

    fn launch(&self, provider: &ModelProvider) -> Result<Box<dyn DesignSession>> {
        Ok(Box::new(self.sandbox.spawn_with(&self.design_id, &self.artifact, Some(provider.clone()))?))
    }
}
