//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, Embeddings, FaultKind, LiveConfig, ModelBackend, ModelRequest, Payload, ProviderFault};

pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveBackend {
    /// Reads the API key from `config.api_key_env`.
    pub fn new(config: LiveConfig) -> Result<Self, ProviderFault> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ProviderFault::new(FaultKind::Config, format!("environment variable {} is not set", config.api_key_env))
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderFault> {
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let attempts = self.config.max_attempts.max(1);
        let mut last = ProviderFault::new(FaultKind::Endpoint, "no attempt made");
        for attempt in 1..=attempts {
            let result = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body)
                .and_then(|mut resp| resp.body_mut().read_json::<Value>());
            match result {
                Ok(value) => return Ok(value),
                Err(err) => {
                    let status = match &err {
                        ureq::Error::StatusCode(code) => Some(*code),
                        _ => None,
                    };
                    last = ProviderFault {
                        kind: FaultKind::Endpoint,
                        status,
                        attempts: attempt,
                        detail: err.to_string(),
                    };
                    // Client errors other than rate limiting will not improve.
                    if matches!(status, Some(code) if (400..500).contains(&code) && code != 429) {
                        break;
                    }
                    if attempt < attempts {
                        std::thread::sleep(Duration::from_millis(500 * u64::from(attempt)));
                    }
                }
            }
        }
        Err(last)
    }
}

fn protocol(detail: &str) -> ProviderFault {
    ProviderFault::new(FaultKind::Protocol, detail)
}

impl ModelBackend for LiveBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, ProviderFault> {
        let Payload::Messages(messages) = &request.payload else {
            return Err(ProviderFault::new(FaultKind::Config, "chat request without messages"));
        };
        let body = json!({
            "model": self.config.model(request.role),
            "messages": messages,
        });
        let value = self.post("chat/completions", &body)?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| protocol("response has no choices[0].message.content"))?
            .to_string();
        let tokens = value["usage"]["prompt_tokens"]
            .as_u64()
            .zip(value["usage"]["completion_tokens"].as_u64());
        Ok(Completion { text, tokens })
    }

    fn embed(&self, request: &ModelRequest, texts: &[String]) -> Result<Embeddings, ProviderFault> {
        let body = json!({
            "model": self.config.model(request.role),
            "input": texts,
        });
        let value = self.post("embeddings", &body)?;
        let data = value["data"].as_array().ok_or_else(|| protocol("response has no data array"))?;
        let mut vectors = Vec::with_capacity(data.len());
        for item in data {
            let raw: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| protocol("data item has no embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| protocol("non-numeric embedding component")))
                .collect::<Result<_, _>>()?;
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.push(if norm > 0.0 { raw.iter().map(|x| x / norm).collect() } else { raw });
        }
        if vectors.len() != texts.len() {
            return Err(protocol("embedding count does not match input count"));
        }
        Ok(Embeddings {
            vectors,
            tokens: value["usage"]["prompt_tokens"].as_u64(),
        })
    }
}
