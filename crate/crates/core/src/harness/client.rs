use std::collections::HashMap;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dataset::Example;
use super::prompt::{Part, PromptPayload, PromptStyle};
use crate::error::{Error, Result};
use crate::render::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    /// Seconds spent on the request, retries and backoff included.
    pub latency_seconds: f64,
    pub usage: Option<Usage>,
    /// Attempts beyond the first.
    pub retries: u32,
}

pub trait ModelClient: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, payload: &PromptPayload) -> Result<ModelResponse>;

    /// Whether latencies are reproducible rather than measured.
    fn simulated_latency(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << retry.min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub retry: RetryPolicy,
    /// Attach blank-patch masks as the `x_patch_masks` request field.
    pub send_masks: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "PIXELBENCH_API_KEY".into(),
            timeout_secs: 120.0,
            retry: RetryPolicy::default(),
            send_masks: false,
        }
    }
}

enum Failure {
    Transient(String),
    Fatal(Error),
}

/// Chat-completions client over blocking HTTP.
pub struct HttpClient {
    cfg: EndpointConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    /// Fails with `Auth` when the credential variable is unset or empty.
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Auth(format!("environment variable {} is not set", cfg.api_key_env)))?;
        if !(cfg.timeout_secs > 0.0) || cfg.retry.max_attempts == 0 {
            return Err(Error::Config("timeout and max_attempts must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, api_key, agent })
    }

    pub fn request_body(&self, payload: &PromptPayload) -> Value {
        request_body(&self.cfg, payload)
    }

    fn attempt(&self, body: &Value) -> std::result::Result<(String, Option<Usage>), Failure> {
        let mut resp = match self
            .agent
            .post(&self.cfg.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
        {
            Ok(r) => r,
            Err(e) => return Err(classify(e)),
        };
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(Failure::Fatal(Error::Auth(format!("endpoint answered {status}"))));
        }
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(format!("endpoint answered {status}")));
        }
        if !(200..300).contains(&status) {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(Error::Transport(format!("endpoint answered {status}: {detail}"))));
        }
        let v: Value = resp.body_mut().read_json().map_err(classify)?;
        parse_completion(&v).map_err(Failure::Fatal)
    }
}

fn classify(e: ureq::Error) -> Failure {
    use ureq::Error as U;
    match e {
        U::Timeout(_) | U::Io(_) | U::HostNotFound | U::ConnectionFailed | U::Protocol(_) | U::BodyStalled => {
            Failure::Transient(e.to_string())
        }
        U::Json(e) => Failure::Fatal(Error::Transport(format!("malformed response body: {e}"))),
        other => Failure::Fatal(Error::Transport(other.to_string())),
    }
}

pub fn request_body(cfg: &EndpointConfig, payload: &PromptPayload) -> Value {
    let content: Vec<Value> = payload
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image { png, .. } => json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", BASE64.encode(png))}
            }),
        })
        .collect();
    let mut body = json!({
        "model": cfg.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": payload.settings.temperature,
        "max_tokens": payload.settings.max_tokens,
    });
    if cfg.send_masks && !payload.masks.is_empty() {
        body["x_patch_masks"] = json!({"patch_size": payload.patch_size, "masks": payload.masks});
    }
    body
}

fn parse_completion(v: &Value) -> Result<(String, Option<Usage>)> {
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""),
        _ => return Err(Error::Transport("response has no choices[0].message.content".into())),
    };
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((text, usage))
}

impl ModelClient for HttpClient {
    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, payload: &PromptPayload) -> Result<ModelResponse> {
        let body = self.request_body(payload);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 0..self.cfg.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.cfg.retry.delay(attempt - 1));
            }
            match self.attempt(&body) {
                Ok((text, usage)) => {
                    return Ok(ModelResponse {
                        text,
                        latency_seconds: started.elapsed().as_secs_f64(),
                        usage,
                        retries: attempt,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last}",
            self.cfg.retry.max_attempts
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "behavior")]
pub enum MockBehavior {
    /// Replies with the payload's text parts and image sizes.
    Echo,
    /// Replies with the first reference for a seeded fraction of examples.
    Oracle { accuracy: f64 },
}

/// Deterministic offline endpoint. Latency is a linear cost model over
/// prompt characters, retained image patches and output length.
pub struct MockClient {
    behavior: MockBehavior,
    seed: u64,
    answers: HashMap<String, (String, Option<Vec<String>>)>,
}

const MOCK_BASE_SECONDS: f64 = 0.25;
const MOCK_SECONDS_PER_TOKEN: f64 = 0.002;
const MOCK_SECONDS_PER_OUTPUT_TOKEN: f64 = 0.02;

impl MockClient {
    pub fn echo() -> Self {
        Self {
            behavior: MockBehavior::Echo,
            seed: 0,
            answers: HashMap::new(),
        }
    }

    pub fn oracle(examples: &[Example], accuracy: f64, seed: u64) -> Self {
        Self::new(MockBehavior::Oracle { accuracy }, examples, seed)
    }

    pub fn new(behavior: MockBehavior, examples: &[Example], seed: u64) -> Self {
        let answers = examples
            .iter()
            .map(|e| (e.id.clone(), (e.references[0].clone(), e.choices.clone())))
            .collect();
        Self { behavior, seed, answers }
    }

    fn unit(&self, payload: &PromptPayload) -> f64 {
        let key = format!("{}|{}|{}|{}", self.seed, payload.meta.example_id, payload.meta.mode, payload.meta.style);
        let h = sha256_hex(key.as_bytes());
        u64::from_str_radix(&h[..13], 16).expect("hex digest") as f64 / (1u64 << 52) as f64
    }

    fn reply(&self, payload: &PromptPayload) -> String {
        match self.behavior {
            MockBehavior::Echo => payload
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => t.clone(),
                    Part::Image { width, height, .. } => format!("[image {width}x{height}]"),
                })
                .collect::<Vec<_>>()
                .join("\n"),
            MockBehavior::Oracle { accuracy } => {
                let Some((gold, choices)) = self.answers.get(&payload.meta.example_id) else {
                    return "I do not know.".into();
                };
                let answer = if self.unit(payload) < accuracy {
                    gold.clone()
                } else {
                    choices
                        .as_ref()
                        .and_then(|c| c.iter().find(|l| !l.eq_ignore_ascii_case(gold)).cloned())
                        .unwrap_or_else(|| "unknown".into())
                };
                match payload.meta.style {
                    PromptStyle::Direct => answer,
                    PromptStyle::CoT => format!(
                        "Let me work through this step by step.\nFirst, I restate what is being asked.\n\
                         Then I check each candidate against the given information.\nAnswer: {answer}"
                    ),
                }
            }
        }
    }

    /// Simulated seconds for one request.
    pub fn latency(payload: &PromptPayload, output: &str) -> f64 {
        let text_tokens = payload.text_chars().div_ceil(4);
        let image_tokens: usize = if payload.masks.is_empty() {
            payload
                .parts
                .iter()
                .map(|p| match p {
                    Part::Image { width, height, .. } => {
                        (width.div_ceil(payload.patch_size) * height.div_ceil(payload.patch_size)) as usize
                    }
                    Part::Text(_) => 0,
                })
                .sum()
        } else {
            payload.masks.iter().map(|m| m.retained).sum()
        };
        let out_tokens = output.chars().count().div_ceil(4);
        let secs = MOCK_BASE_SECONDS
            + MOCK_SECONDS_PER_TOKEN * (text_tokens + image_tokens) as f64
            + MOCK_SECONDS_PER_OUTPUT_TOKEN * out_tokens as f64;
        (secs * 1e6).round() / 1e6
    }
}

impl ModelClient for MockClient {
    fn model_id(&self) -> &str {
        match self.behavior {
            MockBehavior::Echo => "mock-echo",
            MockBehavior::Oracle { .. } => "mock-oracle",
        }
    }

    fn complete(&self, payload: &PromptPayload) -> Result<ModelResponse> {
        let text = self.reply(payload);
        Ok(ModelResponse {
            latency_seconds: Self::latency(payload, &text),
            usage: Some(Usage {
                prompt_tokens: payload.text_chars().div_ceil(4) as u64,
                completion_tokens: text.chars().count().div_ceil(4) as u64,
            }),
            text,
            retries: 0,
        })
    }

    fn simulated_latency(&self) -> bool {
        true
    }
}
