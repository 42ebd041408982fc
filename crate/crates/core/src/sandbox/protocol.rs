//! Wire format between the harness and a design process: one JSON object per
//! line over the child's standard streams, UTF-8, tagged by `kind`.

use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::environments::Trajectory;
use crate::provider::{ChatMessage, ModelRole};

/// Default cap on a single line in either direction.
pub const MAX_MESSAGE_BYTES: usize = 8 * 1024 * 1024;

/// What a design sees when asked to retrieve: the task objective and the
/// first observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub goal: String,
    pub observation: String,
}

/// Harness to design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    Init {
        design_id: String,
        workdir: String,
        #[serde(default)]
        config: Value,
    },
    Update {
        trajectory: Trajectory,
        feedback: f64,
    },
    Retrieve {
        task_state: TaskState,
    },
    Snapshot,
    Restore {
        snapshot_id: String,
    },
    Shutdown,
    /// Answer to a `model_call` the design issued.
    ModelResult {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vectors: Option<Vec<Vec<f64>>>,
    },
    ModelError {
        detail: String,
    },
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Init { .. } => "init",
            Request::Update { .. } => "update",
            Request::Retrieve { .. } => "retrieve",
            Request::Snapshot => "snapshot",
            Request::Restore { .. } => "restore",
            Request::Shutdown => "shutdown",
            Request::ModelResult { .. } => "model_result",
            Request::ModelError { .. } => "model_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub detail: String,
}

/// Design to harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    Ok {
        #[serde(default, skip_serializing_if = "Value::is_null")]
        info: Value,
    },
    Knowledge {
        text: String,
    },
    SnapshotId {
        id: String,
    },
    Error {
        error: ErrorBody,
    },
    /// Only valid while the design is servicing a request.
    ModelCall {
        role: ModelRole,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        messages: Option<Vec<ChatMessage>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        texts: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
}

impl Response {
    pub fn ok() -> Self {
        Response::Ok { info: Value::Null }
    }

    pub fn error(kind: impl Into<String>, detail: impl Into<String>) -> Self {
        Response::Error {
            error: ErrorBody {
                kind: kind.into(),
                detail: detail.into(),
            },
        }
    }
}

#[derive(Debug)]
pub enum FrameError {
    TooLarge,
    Io(io::Error),
}

/// Reads one `\n`-terminated line of at most `cap` bytes (terminator
/// excluded). `Ok(None)` at end of stream. A final unterminated line is
/// returned as is.
pub fn read_frame<R: BufRead>(reader: &mut R, cap: usize) -> Result<Option<String>, FrameError> {
    let mut line: Vec<u8> = Vec::new();
    loop {
        let buf = reader.fill_buf().map_err(FrameError::Io)?;
        if buf.is_empty() {
            if line.is_empty() {
                return Ok(None);
            }
            break;
        }
        match buf.iter().position(|b| *b == b'\n') {
            Some(i) => {
                if line.len() + i > cap {
                    return Err(FrameError::TooLarge);
                }
                line.extend_from_slice(&buf[..i]);
                reader.consume(i + 1);
                break;
            }
            None => {
                let n = buf.len();
                if line.len() + n > cap {
                    return Err(FrameError::TooLarge);
                }
                line.extend_from_slice(buf);
                reader.consume(n);
            }
        }
    }
    if line.last() == Some(&b'\r') {
        line.pop();
    }
    String::from_utf8(line)
        .map(Some)
        .map_err(|e| FrameError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))
}

/// Serializes a message as one line including the terminator.
pub fn encode<T: Serialize>(message: &T) -> String {
    let mut line = serde_json::to_string(message).expect("protocol message serializes");
    line.push('\n');
    line
}
