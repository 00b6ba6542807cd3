//! Chat-completion wire client.
//!
//! Speaks the common `messages` JSON protocol over HTTP: the endpoint,
//! model name, and API key are configuration. Transport failures are
//! retried with backoff; a malformed model reply triggers exactly one
//! repair re-prompt (echoing the schema) before failing, which keeps tree
//! expansion bounded and reproducible.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, repair_prompt};
use super::{
    finish_candidates, parse_response, InteractionCandidate, PastInteraction, PredictError,
    Predictor, PredictorConfig,
};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "LP2_API_KEY";

const SYSTEM_MESSAGE: &str = "You forecast the next object interactions of a person \
     in an indoor environment. Answer with JSON only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireConfig {
    /// Full chat-completion endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Per-request timeout, seconds.
    pub timeout_s: f64,
    /// Additional attempts after a transport failure.
    pub max_retries: u32,
    /// Maximum concurrent requests.
    pub max_in_flight: usize,
}

impl Default for WireConfig {
    fn default() -> Self {
        WireConfig {
            endpoint: String::new(),
            model: String::new(),
            timeout_s: 60.0,
            max_retries: 2,
            max_in_flight: 4,
        }
    }
}

pub struct WireClient {
    config: WireConfig,
    api_key: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for WireClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireClient")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish()
    }
}

impl WireClient {
    /// Build a client; reads the API key from `LP2_API_KEY`.
    pub fn new(config: WireConfig) -> Result<Self, PredictError> {
        let api_key = std::env::var(API_KEY_ENV).unwrap_or_default();
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: WireConfig, api_key: String) -> Result<Self, PredictError> {
        if config.endpoint.is_empty() {
            return Err(PredictError::Argument(
                "wire predictor requires an endpoint URL".into(),
            ));
        }
        if config.max_in_flight == 0 {
            return Err(PredictError::Argument(
                "max_in_flight must be at least 1".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(WireClient {
            gate: Gate::new(config.max_in_flight),
            config,
            api_key,
            agent,
        })
    }

    /// One round-trip with transport retries. Returns the reply text.
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, PredictError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: 0.0,
        };
        let mut last_error = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(4)));
            }
            let _slot = self.gate.acquire();
            let result = self
                .agent
                .post(&self.config.endpoint)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(&body);
            match result {
                Ok(mut response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed: ChatResponse =
                            response.body_mut().read_json().map_err(|e| {
                                PredictError::Transport {
                                    detail: format!("invalid completion envelope: {e}"),
                                    attempts: attempt + 1,
                                }
                            })?;
                        let content = parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| PredictError::Transport {
                                detail: "completion reply has no choices".to_string(),
                                attempts: attempt + 1,
                            })?;
                        return Ok(content);
                    }
                    last_error = format!("HTTP status {status}");
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(PredictError::Transport {
            detail: last_error,
            attempts,
        })
    }
}

impl Predictor for WireClient {
    fn predict_next(
        &self,
        scene_text: &str,
        past: &[PastInteraction],
        assumed_future: &[InteractionCandidate],
        config: &PredictorConfig,
    ) -> Result<Vec<InteractionCandidate>, PredictError> {
        let prompt = build_prompt(scene_text, past, assumed_future, config);
        let mut messages = vec![
            ChatMessage {
                role: "system",
                content: SYSTEM_MESSAGE.to_string(),
            },
            ChatMessage {
                role: "user",
                content: prompt,
            },
        ];
        let reply = self.complete(&messages)?;
        let candidates = match parse_response(&reply, config.granularity) {
            Ok(c) => c,
            Err(PredictError::Format { detail, .. }) => {
                // One repair round: echo the schema, then fail hard.
                messages.push(ChatMessage {
                    role: "assistant",
                    content: reply,
                });
                messages.push(ChatMessage {
                    role: "user",
                    content: repair_prompt(&detail),
                });
                let repaired = self.complete(&messages)?;
                parse_response(&repaired, config.granularity)?
            }
            Err(e) => return Err(e),
        };
        finish_candidates(candidates, config.width, "<wire>")
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage {
    role: &'static str,
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: String,
}

/// Counting gate bounding concurrent requests.
struct Gate {
    state: Mutex<usize>,
    available: Condvar,
    capacity: usize,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(capacity: usize) -> Self {
        Gate {
            state: Mutex::new(0),
            available: Condvar::new(),
            capacity,
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut in_flight = self.state.lock().expect("gate poisoned");
        while *in_flight >= self.capacity {
            in_flight = self.available.wait(in_flight).expect("gate poisoned");
        }
        *in_flight += 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.0.state.lock().expect("gate poisoned");
        *in_flight -= 1;
        self.0.available.notify_one();
    }
}
