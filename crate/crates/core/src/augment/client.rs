use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::fallback::fallback_generate;
use super::prompt::build_grounding_prompt;
use super::validate::{validate_grounding_task, Verdict, DEFAULT_DUPLICATE_THRESHOLD};
use super::{GroundingTask, Origin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub timeout_ms: u64,
    pub max_concurrent: usize,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub temperature: f64,
    pub duplicate_threshold: f64,
    /// Skip the network and use the built-in task table.
    pub offline: bool,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "LLM_API_KEY".into(),
            max_retries: 3,
            timeout_ms: 60_000,
            max_concurrent: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            temperature: 0.7,
            duplicate_threshold: DEFAULT_DUPLICATE_THRESHOLD,
            offline: false,
        }
    }
}

impl LlmEndpointConfig {
    pub fn offline() -> Self {
        LlmEndpointConfig {
            offline: true,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.max_concurrent == 0 {
            return Err(Error::InvalidInput("max_concurrent must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.duplicate_threshold) {
            return Err(Error::InvalidInput("duplicate_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Delay before retry `k` (1-based) is `base * 2^(k-1)`, capped at
    /// `backoff_max_ms`.
    pub fn backoff_schedule(&self) -> Vec<Duration> {
        (0..self.max_retries)
            .map(|k| {
                let ms = self.backoff_base_ms.saturating_mul(1u64 << k.min(40));
                Duration::from_millis(ms.min(self.backoff_max_ms.max(self.backoff_base_ms)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Sends one chat-completion request and returns the assistant text.
pub trait ChatTransport: Sync {
    fn complete(&self, cfg: &LlmEndpointConfig, messages: &[ChatMessage]) -> std::result::Result<String, String>;
}

/// Blocking HTTP transport speaking the common `chat/completions` format.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl ChatTransport for HttpTransport {
    fn complete(&self, cfg: &LlmEndpointConfig, messages: &[ChatMessage]) -> std::result::Result<String, String> {
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        let body = serde_json::json!({
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
        });
        let mut req = agent.post(&url).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&cfg.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| format!("POST {url}: {e}"))?;
        let reply: Value = resp.body_mut().read_json().map_err(|e| format!("reading reply: {e}"))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "reply has no choices[0].message.content".to_string())
    }
}

/// Pulls the candidate list for `object` out of the assistant text. The
/// text may wrap the JSON object in prose or code fences.
pub fn parse_reply(content: &str, object: &str) -> std::result::Result<Vec<String>, String> {
    let start = content.find('{').ok_or("reply contains no JSON object")?;
    let end = content.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    let map: serde_json::Map<String, Value> =
        serde_json::from_str(&content[start..=end]).map_err(|e| format!("reply is not a JSON object: {e}"))?;
    let list = map
        .iter()
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(object.trim()))
        .map(|(_, v)| v)
        .or_else(|| (map.len() == 1).then(|| map.values().next()).flatten())
        .ok_or_else(|| format!("reply has no key for {object:?}"))?;
    let items = list.as_array().ok_or("task list is not an array")?;
    items
        .iter()
        .map(|v| {
            v.as_str()
                .map(|s| s.trim().to_string())
                .ok_or_else(|| "task entry is not a string".to_string())
        })
        .collect()
}

/// Keeps the candidates that pass the guideline checks against `history`
/// and against each other, in reply order.
pub(crate) fn accept_candidates(
    object: &str,
    candidates: Vec<String>,
    history: &[String],
    threshold: f64,
    origin: Origin,
) -> Vec<GroundingTask> {
    let mut seen: Vec<String> = history.to_vec();
    let mut out = Vec::new();
    for c in candidates {
        match validate_grounding_task(&c, object, &seen, threshold) {
            Verdict::Accept => {
                seen.push(c.clone());
                out.push(GroundingTask {
                    object: object.to_string(),
                    description: c,
                    origin,
                });
            }
            Verdict::Reject(reason) => log::info!("rejected task for {object}: {c:?} ({reason})"),
        }
    }
    out
}

/// Asks the endpoint for new grounding tasks for `object`, retrying
/// transport failures and unparseable replies with exponential backoff.
/// Only candidates that pass validation are returned.
pub fn request_grounding_tasks(
    object: &str,
    history: &[String],
    cfg: &LlmEndpointConfig,
    transport: &dyn ChatTransport,
) -> Result<Vec<GroundingTask>> {
    cfg.check()?;
    if cfg.offline {
        let candidates = fallback_generate(object, usize::MAX)
            .into_iter()
            .map(|t| t.description)
            .collect();
        return Ok(accept_candidates(
            object,
            candidates,
            history,
            cfg.duplicate_threshold,
            Origin::Fallback,
        ));
    }
    let prompt = build_grounding_prompt(object, history)?;
    let messages = [ChatMessage {
        role: "user".into(),
        content: prompt,
    }];
    let delays = cfg.backoff_schedule();
    let mut last = String::new();
    let attempts = cfg.max_retries as usize + 1;
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(delays[attempt - 1]);
        }
        let outcome = transport
            .complete(cfg, &messages)
            .and_then(|content| parse_reply(&content, object));
        match outcome {
            Ok(candidates) => {
                return Ok(accept_candidates(
                    object,
                    candidates,
                    history,
                    cfg.duplicate_threshold,
                    Origin::Llm,
                ))
            }
            Err(e) => {
                log::warn!("{object}: attempt {} of {attempts} failed: {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(Error::Endpoint { attempts, last })
}
