//! Model access for the meta agent, the acting policy and sandboxed designs.
//!
//! Every call goes through [`ModelProvider`], which prices the usage from a
//! [`PriceTable`] in integer micro-units and appends one attributed entry to
//! its [`CostLedger`].

mod embedding;
mod ledger;
#[cfg(feature = "live")]
mod live;
mod mock;
mod tokenizer;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::util::sha256_hex;

pub use embedding::{cosine, hash_embed, EMBEDDING_DIM};
pub use ledger::{end_to_end_memory_cost, CostLedger, LedgerEntry, Totals};
#[cfg(feature = "live")]
pub use live::LiveBackend;
pub use mock::{MockBackend, MockEntry, MockUsage, REFUSAL};
pub use tokenizer::{count_tokens, TokenScheme, DEFAULT_SCHEME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Chat,
    Reasoning,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Caller {
    MetaAgent,
    Policy,
    MemoryDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collection,
    Deployment,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Messages(Vec<ChatMessage>),
    Texts(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub role: ModelRole,
    pub payload: Payload,
    pub caller: Caller,
    pub phase: Phase,
    /// Free-form attribution label, e.g. a task id or `plan:<design>`.
    pub tag: String,
}

impl ModelRequest {
    pub fn chat(role: ModelRole, messages: Vec<ChatMessage>, caller: Caller, phase: Phase, tag: impl Into<String>) -> Self {
        Self {
            role,
            payload: Payload::Messages(messages),
            caller,
            phase,
            tag: tag.into(),
        }
    }

    pub fn embedding(texts: Vec<String>, caller: Caller, phase: Phase, tag: impl Into<String>) -> Self {
        Self {
            role: ModelRole::Embedding,
            payload: Payload::Texts(texts),
            caller,
            phase,
            tag: tag.into(),
        }
    }

    /// All message contents (or texts) joined by newlines.
    pub fn prompt_text(&self) -> String {
        match &self.payload {
            Payload::Messages(m) => m.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n"),
            Payload::Texts(t) => t.join("\n"),
        }
    }

    /// Content hash over role and payload; attribution fields are excluded so
    /// scripts stay valid across callers.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&(&self.role, &self.payload)).expect("request serializes");
        sha256_hex(canonical.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Micro-units of currency.
    pub cost_micros: u64,
}

/// Micro-units of currency per token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Price {
    pub input_micros: u64,
    pub output_micros: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceTable {
    pub chat: Price,
    pub reasoning: Price,
    pub embedding: Price,
}

impl PriceTable {
    pub fn uniform(price: Price) -> Self {
        Self {
            chat: price,
            reasoning: price,
            embedding: price,
        }
    }

    pub fn price(&self, role: ModelRole) -> Price {
        match role {
            ModelRole::Chat => self.chat,
            ModelRole::Reasoning => self.reasoning,
            ModelRole::Embedding => self.embedding,
        }
    }

    pub fn usage(&self, role: ModelRole, input_tokens: u64, output_tokens: u64) -> Usage {
        let p = self.price(role);
        Usage {
            input_tokens,
            output_tokens,
            cost_micros: input_tokens * p.input_micros + output_tokens * p.output_micros,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Strict mock has no entry for the request.
    Unscripted,
    /// Transport or HTTP failure after all retries.
    Endpoint,
    /// Endpoint answered with something unusable.
    Protocol,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("provider fault ({kind:?}, status {status:?}, {attempts} attempt(s)): {detail}")]
pub struct ProviderFault {
    pub kind: FaultKind,
    pub status: Option<u16>,
    pub attempts: u32,
    pub detail: String,
}

impl ProviderFault {
    pub fn new(kind: FaultKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            status: None,
            attempts: 1,
            detail: detail.into(),
        }
    }
}

/// Raw backend answer; token counts are `None` when the backend does not
/// report them.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub tokens: Option<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub vectors: Vec<Vec<f64>>,
    pub tokens: Option<u64>,
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderFault>;
    fn embed(&self, request: &ModelRequest, texts: &[String]) -> Result<Embeddings, ProviderFault>;
}

#[derive(Clone)]
pub struct ModelProvider {
    backend: Arc<dyn ModelBackend>,
    prices: PriceTable,
    scheme: TokenScheme,
    ledger: Arc<Mutex<CostLedger>>,
}

impl std::fmt::Debug for ModelProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelProvider")
            .field("prices", &self.prices)
            .field("scheme", &self.scheme)
            .finish_non_exhaustive()
    }
}

impl ModelProvider {
    pub fn new(backend: Arc<dyn ModelBackend>, prices: PriceTable) -> Self {
        Self {
            backend,
            prices,
            scheme: TokenScheme::default(),
            ledger: Arc::new(Mutex::new(CostLedger::default())),
        }
    }

    /// Lenient mock with no script; handy when only scripted policies run.
    pub fn offline() -> Self {
        Self::new(Arc::new(MockBackend::new(Vec::new(), false)), PriceTable::default())
    }

    /// Same backend and prices, empty ledger of its own.
    pub fn with_fresh_ledger(&self) -> Self {
        Self {
            ledger: Arc::new(Mutex::new(CostLedger::default())),
            ..self.clone()
        }
    }

    /// Token counter used when the backend reports no usage.
    pub fn with_scheme(mut self, scheme: TokenScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    pub fn prices(&self) -> &PriceTable {
        &self.prices
    }

    pub fn complete(&self, request: &ModelRequest) -> Result<(String, Usage), ProviderFault> {
        if matches!(request.payload, Payload::Texts(_)) || request.role == ModelRole::Embedding {
            return Err(ProviderFault::new(FaultKind::Config, "complete needs a chat/reasoning message payload"));
        }
        let completion = self.backend.complete(request)?;
        let (input, output) = completion.tokens.unwrap_or_else(|| {
            (
                self.scheme.count(&request.prompt_text()) as u64,
                self.scheme.count(&completion.text) as u64,
            )
        });
        let usage = self.prices.usage(request.role, input, output);
        self.record(request, usage);
        Ok((completion.text, usage))
    }

    pub fn embed(&self, request: &ModelRequest) -> Result<(Vec<Vec<f64>>, Usage), ProviderFault> {
        let Payload::Texts(texts) = &request.payload else {
            return Err(ProviderFault::new(FaultKind::Config, "embed needs a text-list payload"));
        };
        if texts.is_empty() {
            return Err(ProviderFault::new(FaultKind::Config, "embed needs at least one text"));
        }
        let result = self.backend.embed(request, texts)?;
        let input = result
            .tokens
            .unwrap_or_else(|| texts.iter().map(|t| self.scheme.count(t) as u64).sum());
        let usage = self.prices.usage(ModelRole::Embedding, input, 0);
        self.record(request, usage);
        Ok((result.vectors, usage))
    }

    fn record(&self, request: &ModelRequest, usage: Usage) {
        self.ledger.lock().expect("ledger lock").push(LedgerEntry {
            caller: request.caller,
            phase: request.phase,
            role: request.role,
            tag: request.tag.clone(),
            usage,
        });
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    /// Appends entries recorded elsewhere (e.g. a per-candidate ledger).
    pub fn absorb(&self, other: &CostLedger) {
        self.ledger.lock().expect("ledger lock").extend(other);
    }
}

/// Settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub chat_model: String,
    pub reasoning_model: String,
    pub embedding_model: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "MEMARCH_API_KEY".into(),
            chat_model: "gpt-4o-mini".into(),
            reasoning_model: "gpt-4.1".into(),
            embedding_model: "text-embedding-3-small".into(),
            timeout_secs: 120,
            max_attempts: 3,
        }
    }
}

impl LiveConfig {
    pub fn model(&self, role: ModelRole) -> &str {
        match role {
            ModelRole::Chat => &self.chat_model,
            ModelRole::Reasoning => &self.reasoning_model,
            ModelRole::Embedding => &self.embedding_model,
        }
    }
}
