//! Scripted offline backend.
//!
//! A script is JSON-lines of `{"match": ..., "response": ..., "usage": ...}`.
//! `match` is either `hash:<hex>` (exact [`ModelRequest::hash`]) or a
//! substring of the request's prompt text; several substrings joined by
//! ` && ` must all occur. Entries sharing the same `match`
//! (and `role`, if given) form a sequence: the n-th request with a given tag
//! gets the n-th response, the last one repeating. Embeddings never need a
//! script; they come from [`hash_embed`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    hash_embed, Completion, Embeddings, FaultKind, ModelBackend, ModelRequest, ModelRole, ProviderFault,
    EMBEDDING_DIM,
};
use crate::error::{Error, Result};

/// Canned reply of the lenient mock for unscripted requests.
pub const REFUSAL: &str = "I cannot help with that.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<MockUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ModelRole>,
}

impl MockEntry {
    pub fn new(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            response: response.into(),
            usage: None,
            role: None,
        }
    }

    pub fn with_usage(mut self, input_tokens: u64, output_tokens: u64) -> Self {
        self.usage = Some(MockUsage {
            input_tokens,
            output_tokens,
        });
        self
    }

    pub fn with_role(mut self, role: ModelRole) -> Self {
        self.role = Some(role);
        self
    }

    fn matches(&self, request: &ModelRequest, hash: &str, prompt: &str) -> bool {
        if self.role.is_some_and(|r| r != request.role) {
            return false;
        }
        match self.pattern.strip_prefix("hash:") {
            Some(h) => h == hash,
            None => self.pattern.split(" && ").all(|part| prompt.contains(part)),
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    /// Sequences of entries, keyed by their shared match and role.
    groups: Vec<Vec<MockEntry>>,
    strict: bool,
    cursors: Mutex<HashMap<(usize, String), usize>>,
}

impl MockBackend {
    pub fn new(entries: Vec<MockEntry>, strict: bool) -> Self {
        let mut groups: Vec<Vec<MockEntry>> = Vec::new();
        for entry in entries {
            match groups
                .iter_mut()
                .find(|g| g[0].pattern == entry.pattern && g[0].role == entry.role)
            {
                Some(group) => group.push(entry),
                None => groups.push(vec![entry]),
            }
        }
        Self {
            groups,
            strict,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn parse_script(text: &str) -> Result<Vec<MockEntry>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Config(format!("mock script line {}: {e}", i + 1)))
            })
            .collect()
    }

    pub fn from_file(path: &Path, strict: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(Self::parse_script(&text)?, strict))
    }
}

impl ModelBackend for MockBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderFault> {
        let hash = request.hash();
        let prompt = request.prompt_text();
        let Some(group_idx) = self
            .groups
            .iter()
            .position(|g| g[0].matches(request, &hash, &prompt))
        else {
            if self.strict {
                return Err(ProviderFault::new(
                    FaultKind::Unscripted,
                    format!("no scripted response for request hash {hash} (tag {})", request.tag),
                ));
            }
            return Ok(Completion {
                text: REFUSAL.to_string(),
                tokens: None,
            });
        };
        let group = &self.groups[group_idx];
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry((group_idx, request.tag.clone())).or_insert(0);
        let entry = &group[(*cursor).min(group.len() - 1)];
        *cursor += 1;
        Ok(Completion {
            text: entry.response.clone(),
            tokens: entry.usage.map(|u| (u.input_tokens, u.output_tokens)),
        })
    }

    fn embed(&self, _request: &ModelRequest, texts: &[String]) -> Result<Embeddings, ProviderFault> {
        Ok(Embeddings {
            vectors: texts.iter().map(|t| hash_embed(t, EMBEDDING_DIM)).collect(),
            tokens: None,
        })
    }
}
