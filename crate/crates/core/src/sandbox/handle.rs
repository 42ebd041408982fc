use std::collections::VecDeque;
use std::io::{BufReader, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::protocol::{encode, read_frame, FrameError, Request, Response, TaskState};
use super::{DesignFault, DesignSession, FaultKind, SandboxLimits};
use crate::environments::Trajectory;
use crate::error::{Error, Result};
use crate::provider::{Caller, ModelProvider, ModelRequest, ModelRole, Phase};
use crate::util::ensure_dir;

const TRANSCRIPT_LINE_CHARS: usize = 2_000;

enum Event {
    Line(String),
    TooLarge,
    Eof,
    ReadError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleState {
    Ready,
    Dead,
}

#[derive(Debug, Clone, Default)]
struct Transcript {
    lines: Arc<Mutex<VecDeque<String>>>,
    cap: usize,
}

impl Transcript {
    fn push(&self, prefix: &str, line: &str) {
        let mut text = format!("{prefix} ");
        if line.len() > TRANSCRIPT_LINE_CHARS {
            let mut cut = TRANSCRIPT_LINE_CHARS;
            while !line.is_char_boundary(cut) {
                cut -= 1;
            }
            text.push_str(&line[..cut]);
            text.push_str(&format!("... [{} bytes]", line.len()));
        } else {
            text.push_str(line);
        }
        let mut lines = self.lines.lock().expect("transcript lock");
        if lines.len() == self.cap.max(1) {
            lines.pop_front();
        }
        lines.push_back(text);
    }

    fn snapshot(&self) -> Vec<String> {
        self.lines.lock().expect("transcript lock").iter().cloned().collect()
    }
}

/// A live design process.
pub struct DesignHandle {
    design_id: String,
    scratch: PathBuf,
    child: Child,
    writer: Option<Sender<String>>,
    events: Receiver<Event>,
    transcript: Transcript,
    limits: SandboxLimits,
    provider: Option<ModelProvider>,
    phase: Phase,
    state: HandleState,
    started: Instant,
}

impl std::fmt::Debug for DesignHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignHandle")
            .field("design_id", &self.design_id)
            .field("scratch", &self.scratch)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl DesignHandle {
    /// Starts `argv` in `scratch` with an empty environment and performs the
    /// `init` exchange.
    pub fn spawn(
        design_id: &str,
        argv: &[String],
        scratch: &Path,
        limits: SandboxLimits,
        provider: Option<ModelProvider>,
    ) -> Result<Self> {
        let spawn_fault = |detail: String| Error::from(DesignFault::new(design_id, FaultKind::Spawn, detail));
        let (program, args) = argv.split_first().ok_or_else(|| spawn_fault("empty command line".into()))?;
        ensure_dir(scratch)?;
        let mut child = Command::new(program)
            .args(args)
            .env_clear()
            .current_dir(scratch)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| spawn_fault(format!("cannot start {program}: {e}")))?;

        let transcript = Transcript {
            lines: Arc::default(),
            cap: limits.transcript_lines,
        };

        let mut stdin = child.stdin.take().expect("piped stdin");
        let (writer, lines_out) = mpsc::channel::<String>();
        thread::spawn(move || {
            for line in lines_out {
                if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
                    break;
                }
            }
        });

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, events) = mpsc::channel();
        let cap = limits.max_message_bytes;
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let event = match read_frame(&mut reader, cap) {
                    Ok(Some(line)) => Event::Line(line),
                    Ok(None) => Event::Eof,
                    Err(FrameError::TooLarge) => Event::TooLarge,
                    Err(FrameError::Io(e)) => Event::ReadError(e.to_string()),
                };
                let last = !matches!(event, Event::Line(_));
                if tx.send(event).is_err() || last {
                    break;
                }
            }
        });

        let stderr = child.stderr.take().expect("piped stderr");
        let log = transcript.clone();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines() {
                match line {
                    Ok(l) => log.push("!!", &l),
                    Err(_) => break,
                }
            }
        });

        let mut handle = Self {
            design_id: design_id.to_string(),
            scratch: scratch.to_path_buf(),
            child,
            writer: Some(writer),
            events,
            transcript,
            limits,
            provider,
            phase: Phase::Collection,
            state: HandleState::Ready,
            started: Instant::now(),
        };
        let init = Request::Init {
            design_id: design_id.to_string(),
            workdir: scratch.to_string_lossy().into_owned(),
            config: Value::Null,
        };
        match handle.call(&init, limits.init_timeout()) {
            Ok(Response::Ok { .. }) => Ok(handle),
            Ok(Response::Error { error }) => Err(handle
                .fatal(FaultKind::DesignError, format!("init failed: {}: {}", error.kind, error.detail))
                .into()),
            Ok(other) => Err(handle.fatal(FaultKind::Protocol, format!("init answered with {}", kind_of(&other))).into()),
            Err(fault) => {
                handle.kill();
                Err(fault.into())
            }
        }
    }

    pub fn design_id(&self) -> &str {
        &self.design_id
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.scratch
    }

    pub fn state(&self) -> HandleState {
        self.state
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn transcript(&self) -> Vec<String> {
        self.transcript.snapshot()
    }

    fn fault(&self, kind: FaultKind, detail: impl Into<String>) -> DesignFault {
        let mut fault = DesignFault::new(&self.design_id, kind, detail);
        fault.transcript = self.transcript.snapshot();
        fault
    }

    /// Kills the process and builds the fault.
    fn fatal(&mut self, kind: FaultKind, detail: impl Into<String>) -> DesignFault {
        self.kill();
        // Let the stderr reader drain what the process left behind.
        thread::sleep(Duration::from_millis(20));
        self.fault(kind, detail)
    }

    fn kill(&mut self) {
        self.state = HandleState::Dead;
        self.writer = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn crashed(&mut self, context: &str) -> DesignFault {
        self.writer = None;
        let deadline = Instant::now() + Duration::from_millis(500);
        let status = loop {
            match self.child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => break None,
            }
        };
        let detail = match status {
            Some(s) => format!("process exited ({s}) {context}"),
            None => format!("output closed {context}"),
        };
        self.fatal(FaultKind::Crashed, detail)
    }

    fn send(&mut self, message: &Request) -> Result<(), DesignFault> {
        let line = encode(message);
        self.transcript.push(">>", line.trim_end());
        let sent = self.writer.as_ref().map(|w| w.send(line).is_ok()).unwrap_or(false);
        if sent {
            Ok(())
        } else {
            Err(self.crashed(&format!("before {}", message.name())))
        }
    }

    /// Sends `request` and waits for its response, servicing any
    /// `model_call`s in between. Design-level `error` responses are returned
    /// as [`Response::Error`]; everything else that goes wrong is fatal.
    pub fn call(&mut self, request: &Request, timeout: Duration) -> Result<Response, DesignFault> {
        if self.state == HandleState::Dead {
            return Err(self.fault(FaultKind::Dead, format!("{} sent to a terminated design", request.name())));
        }
        match self.events.try_recv() {
            Ok(Event::Line(line)) => {
                self.transcript.push("<<", &line);
                return Err(self.fatal(FaultKind::Protocol, "unsolicited output between requests"));
            }
            Ok(Event::TooLarge) => return Err(self.fatal(FaultKind::MessageTooLarge, "oversized output between requests")),
            Ok(Event::Eof) | Err(TryRecvError::Disconnected) => {
                return Err(self.crashed(&format!("before {}", request.name())))
            }
            Ok(Event::ReadError(e)) => return Err(self.fatal(FaultKind::Protocol, e)),
            Err(TryRecvError::Empty) => {}
        }
        self.send(request)?;
        let mut deadline = Instant::now() + timeout;
        if let Some(life) = self.limits.lifetime_ms {
            deadline = deadline.min(self.started + Duration::from_millis(life));
        }
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            let event = match self.events.recv_timeout(wait) {
                Ok(e) => e,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(self.fatal(
                        FaultKind::Timeout,
                        format!("no response to {} within {} ms", request.name(), timeout.as_millis()),
                    ))
                }
                Err(RecvTimeoutError::Disconnected) => Event::Eof,
            };
            let line = match event {
                Event::Line(line) => line,
                Event::TooLarge => {
                    return Err(self.fatal(
                        FaultKind::MessageTooLarge,
                        format!("response to {} exceeds {} bytes", request.name(), self.limits.max_message_bytes),
                    ))
                }
                Event::Eof => return Err(self.crashed(&format!("while servicing {}", request.name()))),
                Event::ReadError(e) => return Err(self.fatal(FaultKind::Protocol, e)),
            };
            self.transcript.push("<<", &line);
            let response: Response = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    return Err(self.fatal(FaultKind::Protocol, format!("unparseable response to {}: {e}", request.name())))
                }
            };
            match response {
                Response::ModelCall {
                    role,
                    messages,
                    texts,
                    tag,
                } => {
                    let reply = self.proxy(role, messages, texts, tag);
                    self.send(&reply)?;
                }
                other => return Ok(other),
            }
        }
    }

    fn proxy(
        &self,
        role: ModelRole,
        messages: Option<Vec<crate::provider::ChatMessage>>,
        texts: Option<Vec<String>>,
        tag: Option<String>,
    ) -> Request {
        let Some(provider) = &self.provider else {
            return Request::ModelError {
                detail: "no model access configured".into(),
            };
        };
        let tag = tag.unwrap_or_else(|| self.design_id.clone());
        let result = match (role, messages, texts) {
            (ModelRole::Embedding, _, Some(texts)) => provider
                .embed(&ModelRequest::embedding(texts, Caller::MemoryDesign, self.phase, tag))
                .map(|(vectors, _)| Request::ModelResult {
                    text: None,
                    vectors: Some(vectors),
                }),
            (ModelRole::Chat | ModelRole::Reasoning, Some(messages), _) => provider
                .complete(&ModelRequest::chat(role, messages, Caller::MemoryDesign, self.phase, tag))
                .map(|(text, _)| Request::ModelResult {
                    text: Some(text),
                    vectors: None,
                }),
            _ => {
                return Request::ModelError {
                    detail: "model_call needs messages for chat roles and texts for embedding".into(),
                }
            }
        };
        result.unwrap_or_else(|fault| Request::ModelError {
            detail: fault.to_string(),
        })
    }

    fn expect_ok(&mut self, request: &Request) -> Result<Response, DesignFault> {
        let response = self.call(request, self.limits.call_timeout())?;
        if let Response::Error { error } = &response {
            return Err(self.fault(FaultKind::DesignError, format!("{}: {}", error.kind, error.detail)));
        }
        Ok(response)
    }

    pub fn call_update(&mut self, trajectory: &Trajectory, feedback: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&feedback) {
            return Err(Error::usage(format!("feedback {feedback} outside [0, 1]")));
        }
        let request = Request::Update {
            trajectory: trajectory.clone(),
            feedback,
        };
        match self.expect_ok(&request)? {
            Response::Ok { .. } => Ok(()),
            other => Err(self.fatal(FaultKind::Protocol, format!("update answered with {}", kind_of(&other))).into()),
        }
    }

    pub fn call_retrieve(&mut self, state: &TaskState) -> Result<String> {
        let request = Request::Retrieve {
            task_state: state.clone(),
        };
        match self.expect_ok(&request)? {
            Response::Knowledge { text } => Ok(text),
            other => Err(self.fatal(FaultKind::Protocol, format!("retrieve answered with {}", kind_of(&other))).into()),
        }
    }

    pub fn call_snapshot(&mut self) -> Result<Option<String>> {
        let response = self.call(&Request::Snapshot, self.limits.call_timeout())?;
        match response {
            Response::SnapshotId { id } => Ok(Some(id)),
            Response::Error { error } if error.kind == "unsupported" => Ok(None),
            Response::Error { error } => {
                Err(self.fault(FaultKind::DesignError, format!("{}: {}", error.kind, error.detail)).into())
            }
            other => Err(self.fatal(FaultKind::Protocol, format!("snapshot answered with {}", kind_of(&other))).into()),
        }
    }

    pub fn call_restore(&mut self, snapshot_id: &str) -> Result<()> {
        let request = Request::Restore {
            snapshot_id: snapshot_id.to_string(),
        };
        match self.expect_ok(&request)? {
            Response::Ok { .. } => Ok(()),
            other => Err(self.fatal(FaultKind::Protocol, format!("restore answered with {}", kind_of(&other))).into()),
        }
    }

    /// Asks the process to exit, then kills it after the grace period.
    /// Safe to call more than once.
    pub fn terminate(&mut self) {
        if self.state == HandleState::Dead {
            return;
        }
        self.state = HandleState::Dead;
        if let Some(writer) = self.writer.take() {
            let line = encode(&Request::Shutdown);
            self.transcript.push(">>", line.trim_end());
            let _ = writer.send(line);
        }
        let deadline = Instant::now() + Duration::from_millis(self.limits.grace_ms);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) if Instant::now() >= deadline => break,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for DesignHandle {
    fn drop(&mut self) {
        self.terminate();
    }
}

fn kind_of(response: &Response) -> &'static str {
    match response {
        Response::Ok { .. } => "ok",
        Response::Knowledge { .. } => "knowledge",
        Response::SnapshotId { .. } => "snapshot_id",
        Response::Error { .. } => "error",
        Response::ModelCall { .. } => "model_call",
    }
}

impl DesignSession for DesignHandle {
    fn design_id(&self) -> &str {
        &self.design_id
    }

    fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    fn update(&mut self, trajectory: &Trajectory, feedback: f64) -> Result<()> {
        self.call_update(trajectory, feedback)
    }

    fn retrieve(&mut self, state: &TaskState) -> Result<String> {
        self.call_retrieve(state)
    }

    fn snapshot(&mut self) -> Result<Option<String>> {
        self.call_snapshot()
    }

    fn restore(&mut self, snapshot_id: &str) -> Result<()> {
        self.call_restore(snapshot_id)
    }

    fn transcript(&self) -> Vec<String> {
        self.transcript.snapshot()
    }
}
