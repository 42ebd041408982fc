use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use super::layers::Layer;
use super::{DesignSpec, Misbehavior, Operation};
use crate::provider::{ChatMessage, ModelRole};
use crate::sandbox::protocol::{encode, read_frame, FrameError, Request, Response, MAX_MESSAGE_BYTES};

/// Model access from inside a design; every call leaves the process as a
/// `model_call` line.
pub trait ModelAccess {
    fn chat(&mut self, messages: Vec<ChatMessage>) -> Result<String, String>;
    fn embed(&mut self, texts: Vec<String>) -> Result<Vec<Vec<f64>>, String>;
}

/// In-process state of one builtin design.
#[derive(Debug)]
pub struct DesignRuntime {
    spec: DesignSpec,
    layers: Vec<Layer>,
    workdir: PathBuf,
    snapshots: u64,
}

enum Outcome {
    Reply(Response),
    Misbehave(Misbehavior, String, Option<Response>),
}

impl DesignRuntime {
    pub fn new(spec: DesignSpec) -> Self {
        let layers = spec.layers.iter().cloned().map(Layer::new).collect();
        Self {
            spec,
            layers,
            workdir: PathBuf::from("."),
            snapshots: 0,
        }
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    fn index(&self, name: &str) -> usize {
        self.layers.iter().position(|l| l.name() == name).expect("validated layer name")
    }

    fn trigger(&mut self, op: Operation) -> Option<(Misbehavior, String)> {
        for layer in &self.layers {
            if let Some(ms) = layer.delay_ms(op) {
                std::thread::sleep(Duration::from_millis(ms));
            }
        }
        self.layers.iter_mut().find_map(|l| l.misbehavior(op))
    }

    fn state(&self) -> Value {
        Value::Object(self.layers.iter().map(|l| (l.name().to_string(), l.state())).collect())
    }

    fn snapshot_path(&self, id: &str) -> Option<PathBuf> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        valid.then(|| self.workdir.join("snapshots").join(format!("{id}.json")))
    }

    fn handle(&mut self, request: Request, model: &mut dyn ModelAccess) -> Outcome {
        let op = match &request {
            Request::Init { .. } => Some(Operation::Init),
            Request::Update { .. } => Some(Operation::Update),
            Request::Retrieve { .. } => Some(Operation::Retrieve),
            Request::Snapshot => Some(Operation::Snapshot),
            _ => None,
        };
        let fault = op.and_then(|op| self.trigger(op));
        let response = match request {
            Request::Init { workdir, .. } => {
                if Path::new(&workdir).is_absolute() {
                    self.workdir = PathBuf::from(workdir);
                }
                Response::Ok {
                    info: json!({"name": self.spec.name}),
                }
            }
            Request::Update { trajectory, feedback } => {
                let mut result = Ok(());
                for name in self.spec.general_update.clone() {
                    let i = self.index(&name);
                    result = self.layers[i].update(&trajectory, feedback, model);
                    if result.is_err() {
                        break;
                    }
                }
                match result {
                    Ok(()) => Response::ok(),
                    Err(e) => Response::error("design_error", e),
                }
            }
            Request::Retrieve { task_state } => {
                let mut parts: Vec<String> = Vec::new();
                let mut failure = None;
                for name in &self.spec.general_retrieve {
                    let layer = &self.layers[self.index(name)];
                    match layer.retrieve(&task_state, &parts.join("\n\n"), model) {
                        Ok(text) if !text.is_empty() => parts.push(text),
                        Ok(_) => {}
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    }
                }
                match failure {
                    Some(e) => Response::error("design_error", e),
                    None => Response::Knowledge { text: parts.join("\n\n") },
                }
            }
            Request::Snapshot if !self.spec.supports_snapshot => {
                Response::error("unsupported", "this design does not support snapshots")
            }
            Request::Snapshot => {
                self.snapshots += 1;
                let id = format!("snap-{}", self.snapshots);
                let path = self.snapshot_path(&id).expect("generated id is valid");
                let text = serde_json::to_string(&self.state()).expect("state serializes");
                let written = path
                    .parent()
                    .map_or(Ok(()), std::fs::create_dir_all)
                    .and_then(|_| std::fs::write(&path, text));
                match written {
                    Ok(()) => Response::SnapshotId { id },
                    Err(e) => Response::error("io", format!("cannot write snapshot: {e}")),
                }
            }
            Request::Restore { snapshot_id } => match self.restore(&snapshot_id) {
                Ok(()) => Response::ok(),
                Err(e) => Response::error("unknown_snapshot", e),
            },
            Request::Shutdown => Response::ok(),
            Request::ModelResult { .. } | Request::ModelError { .. } => {
                Response::error("protocol", "model result received with no model call outstanding")
            }
        };
        match fault {
            Some((Misbehavior::Stray, message)) => Outcome::Misbehave(Misbehavior::Stray, message, Some(response)),
            Some((m, message)) => Outcome::Misbehave(m, message, None),
            None => Outcome::Reply(response),
        }
    }

    fn restore(&mut self, id: &str) -> Result<(), String> {
        let path = self.snapshot_path(id).ok_or_else(|| format!("malformed snapshot id {id:?}"))?;
        let text = std::fs::read_to_string(&path).map_err(|_| format!("no snapshot {id:?}"))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| format!("snapshot {id:?} is corrupt: {e}"))?;
        for layer in &mut self.layers {
            let state = value.get(layer.name()).cloned().unwrap_or(Value::Null);
            layer.set_state(state)?;
        }
        Ok(())
    }
}

struct WireModel<'a, R, W> {
    input: &'a mut R,
    output: &'a mut W,
}

impl<R: BufRead, W: Write> WireModel<'_, R, W> {
    fn call(&mut self, call: Response) -> Result<Request, String> {
        self.output
            .write_all(encode(&call).as_bytes())
            .and_then(|_| self.output.flush())
            .map_err(|e| e.to_string())?;
        match read_frame(self.input, MAX_MESSAGE_BYTES) {
            Ok(Some(line)) => serde_json::from_str(&line).map_err(|e| format!("bad model reply: {e}")),
            Ok(None) => Err("input closed during model call".into()),
            Err(FrameError::TooLarge) => Err("model reply too large".into()),
            Err(FrameError::Io(e)) => Err(e.to_string()),
        }
    }
}

impl<R: BufRead, W: Write> ModelAccess for WireModel<'_, R, W> {
    fn chat(&mut self, messages: Vec<ChatMessage>) -> Result<String, String> {
        let reply = self.call(Response::ModelCall {
            role: ModelRole::Chat,
            messages: Some(messages),
            texts: None,
            tag: None,
        })?;
        match reply {
            Request::ModelResult { text: Some(text), .. } => Ok(text),
            Request::ModelError { detail } => Err(detail),
            other => Err(format!("expected model_result, got {}", other.name())),
        }
    }

    fn embed(&mut self, texts: Vec<String>) -> Result<Vec<Vec<f64>>, String> {
        let reply = self.call(Response::ModelCall {
            role: ModelRole::Embedding,
            messages: None,
            texts: Some(texts),
            tag: None,
        })?;
        match reply {
            Request::ModelResult { vectors: Some(v), .. } => Ok(v),
            Request::ModelError { detail } => Err(detail),
            other => Err(format!("expected model_result, got {}", other.name())),
        }
    }
}

fn emit<W: Write>(output: &mut W, line: &str) -> bool {
    output.write_all(line.as_bytes()).and_then(|_| output.flush()).is_ok()
}

fn misbehave<W: Write>(output: &mut W, action: Misbehavior, message: &str) -> Option<i32> {
    match action {
        Misbehavior::Error => {
            emit(output, &encode(&Response::error("design_error", message)));
            None
        }
        Misbehavior::Crash => {
            eprintln!("{message}");
            Some(3)
        }
        Misbehavior::Hang => loop {
            std::thread::sleep(Duration::from_secs(3600));
        },
        Misbehavior::Garbage => {
            emit(output, "this is not a protocol message\n");
            None
        }
        Misbehavior::Oversize => {
            let mut line = "x".repeat(MAX_MESSAGE_BYTES + 1);
            line.push('\n');
            emit(output, &line);
            None
        }
        Misbehavior::Stray => {
            emit(output, &encode(&Response::ok()));
            None
        }
    }
}

/// Request loop over the given streams. Returns the process exit code.
pub fn serve<R: BufRead, W: Write>(spec: DesignSpec, input: &mut R, output: &mut W) -> i32 {
    let mut runtime = DesignRuntime::new(spec);
    if let Some((action, message)) = runtime.trigger(Operation::Start) {
        if let Some(code) = misbehave(output, action, &message) {
            return code;
        }
    }
    loop {
        let line = match read_frame(input, MAX_MESSAGE_BYTES) {
            Ok(Some(line)) => line,
            Ok(None) => return 0,
            Err(FrameError::TooLarge) => {
                emit(output, &encode(&Response::error("protocol", "request exceeds the message cap")));
                return 1;
            }
            Err(FrameError::Io(_)) => return 1,
        };
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                if !emit(output, &encode(&Response::error("protocol", format!("malformed request: {e}")))) {
                    return 1;
                }
                continue;
            }
        };
        let shutdown = matches!(request, Request::Shutdown);
        let outcome = {
            let mut model = WireModel {
                input: &mut *input,
                output: &mut *output,
            };
            runtime.handle(request, &mut model)
        };
        match outcome {
            Outcome::Reply(response) => {
                if !emit(output, &encode(&response)) {
                    return 1;
                }
            }
            Outcome::Misbehave(action, message, response) => {
                if let Some(response) = response {
                    emit(output, &encode(&response));
                }
                if let Some(code) = misbehave(output, action, &message) {
                    return code;
                }
            }
        }
        if shutdown {
            return 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn run(spec: &str, input: &str) -> (i32, Vec<Value>) {
        let spec = DesignSpec::parse(spec).unwrap();
        let mut reader = Cursor::new(input.as_bytes().to_vec());
        let mut out = Vec::new();
        let code = serve(spec, &mut reader, &mut out);
        let lines = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        (code, lines)
    }

    #[test]
    fn null_design_session() {
        let input = concat!(
            "{\"kind\":\"init\",\"design_id\":\"d\",\"workdir\":\"rel\"}\n",
            "{\"kind\":\"retrieve\",\"task_state\":{\"goal\":\"g\",\"observation\":\"o\"}}\n",
            "not json\n",
            "{\"kind\":\"shutdown\"}\n",
        );
        let (code, out) = run(super::super::shipped("null").unwrap(), input);
        assert_eq!(code, 0);
        assert_eq!(out.len(), 4);
        assert_eq!(out[1], json!({"kind":"knowledge","text":""}));
        assert_eq!(out[2]["error"]["kind"], "protocol");
        assert_eq!(out[3], json!({"kind":"ok"}));
    }

    #[test]
    fn echo_returns_task_state() {
        let input = "{\"kind\":\"retrieve\",\"task_state\":{\"goal\":\"g\",\"observation\":\"o\"}}\n";
        let (_, out) = run(super::super::shipped("echo").unwrap(), input);
        assert_eq!(out[0]["text"], "{\"goal\":\"g\",\"observation\":\"o\"}");
    }

    #[test]
    fn misbehaving_update_reports_error() {
        let spec = r#"{"name":"bad","layers":[{"name":"m","kind":"misbehave","on":"update","action":"error","message":"KeyError: 'steps'"}],
            "general_update":["m"],"general_retrieve":[]}"#;
        let traj = r#"{"task_id":"t","goal":"g","steps":[],"final_observation":"","feedback":0.0,"truncated":false}"#;
        let input = format!("{{\"kind\":\"update\",\"trajectory\":{traj},\"feedback\":0.0}}\n");
        let (_, out) = run(spec, &input);
        assert_eq!(out[0]["error"]["detail"], "KeyError: 'steps'");
    }
}
