//! Live backend speaking the chat-completions wire protocol.
//!
//! Generation goes through `POST {base_url}/chat/completions` with
//! `logprobs` enabled. Target scoring has two modes:
//!
//! - [`ScoreMode::Echo`] (default): the dialogue is flattened to a text
//!   transcript, the target is appended, and `POST {base_url}/completions`
//!   with `echo=true, max_tokens=0, logprobs=0` returns per-token logprobs
//!   over the prompt; the suffix covering the target is kept. Works for
//!   multi-token targets on servers that implement prompt echo (vLLM,
//!   llama.cpp, and most OpenAI-compatible local servers).
//! - [`ScoreMode::TopLogprobs`]: one-token chat completion with
//!   `top_logprobs` and a lookup of the target among the returned
//!   candidates. Valid for single-token targets only; multi-token targets
//!   report [`LlmError::BackendLacksLogprobs`] and the run proceeds
//!   generation-only.
//!
//! Transient failures (timeouts, connection errors, HTTP 429/5xx) are
//! retried with capped exponential backoff. The bearer token is read from
//! the `COGHARNESS_API_KEY` environment variable unless set explicitly.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{check_dialogue, Backend, ChatMessage, CompletionResult, LlmError, Role, Sampling, TargetScore};

/// Environment variable holding the bearer token for live endpoints.
pub const API_KEY_ENV: &str = "COGHARNESS_API_KEY";

/// How a backend obtains target-token logprobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Echo,
    TopLogprobs,
}

/// Retry policy for transient endpoint failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, initial_backoff: Duration::from_millis(500), max_backoff: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        self.initial_backoff.saturating_mul(factor as u32).min(self.max_backoff)
    }
}

/// Chat-completions HTTP backend.
pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    score_mode: ScoreMode,
    top_logprobs: u8,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: RetryPolicy::default(),
            score_mode: ScoreMode::Echo,
            top_logprobs: 20,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_score_mode(mut self, mode: ScoreMode) -> Self {
        self.score_mode = mode;
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// POST a JSON body with retries; returns the parsed body and the
    /// attempt count that succeeded.
    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<(serde_json::Value, u32), LlmError> {
        let url = format!("{}{}", self.base_url, path);
        let mut last_detail = String::new();
        let mut rate_limited = false;
        for attempt in 1..=self.retry.max_attempts {
            let mut request = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (200..300).contains(&status) {
                        let value: serde_json::Value = response
                            .body_mut()
                            .read_json()
                            .map_err(|e| LlmError::MalformedResponse(format!("bad json from {url}: {e}")))?;
                        return Ok((value, attempt));
                    }
                    let text = response.body_mut().read_to_string().unwrap_or_default();
                    if status == 429 || (500..600).contains(&status) {
                        rate_limited = status == 429;
                        last_detail = format!("http {status}: {}", truncate(&text, 200));
                    } else {
                        return Err(LlmError::MalformedResponse(format!("http {status} from {url}: {}", truncate(&text, 200))));
                    }
                }
                Err(e) => {
                    rate_limited = false;
                    last_detail = e.to_string();
                }
            }
            if attempt < self.retry.max_attempts {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
        }
        if rate_limited {
            Err(LlmError::RateLimited { attempts: self.retry.max_attempts })
        } else {
            Err(LlmError::EndpointUnreachable { attempts: self.retry.max_attempts, detail: last_detail })
        }
    }

    fn score_by_echo(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError> {
        let prefix = flatten_dialogue(dialogue);
        let full = format!("{prefix}{target_text}");
        let body = json!({
            "model": self.model,
            "prompt": full,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let (value, _) = self.post_json("/completions", &body)?;
        let parsed: EchoResponse = serde_json::from_value(value)
            .map_err(|e| LlmError::BackendLacksLogprobs(format!("endpoint did not return echo logprobs: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("no choices in echo response".into()))?;
        let lp = choice
            .logprobs
            .ok_or_else(|| LlmError::BackendLacksLogprobs("echo response has no logprobs block".into()))?;
        let boundary = prefix.len();
        let mut logprobs = Vec::new();
        let mut tokens = Vec::new();
        for i in 0..lp.tokens.len() {
            let offset = *lp
                .text_offset
                .get(i)
                .ok_or_else(|| LlmError::MalformedResponse("text_offset shorter than tokens".into()))?;
            if offset >= boundary {
                match lp.token_logprobs.get(i) {
                    Some(Some(v)) => {
                        logprobs.push(*v);
                        tokens.push(lp.tokens[i].clone());
                    }
                    _ => return Err(LlmError::MalformedResponse(format!("missing logprob for target token {i}"))),
                }
            }
        }
        if logprobs.is_empty() {
            return Err(LlmError::BackendLacksLogprobs("no tokens aligned with the target span".into()));
        }
        let mut score = TargetScore::from_logprobs(target_text, logprobs)?;
        score.tokens = Some(tokens);
        Ok(score)
    }

    fn score_by_top_logprobs(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError> {
        if target_text.split_whitespace().count() > 1 {
            return Err(LlmError::BackendLacksLogprobs(
                "top-logprobs scoring handles single-token targets only".into(),
            ));
        }
        let body = json!({
            "model": self.model,
            "messages": wire_messages(dialogue),
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": true,
            "top_logprobs": self.top_logprobs,
        });
        let (value, _) = self.post_json("/chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| LlmError::MalformedResponse(format!("bad chat response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("no choices in response".into()))?;
        let content = choice
            .logprobs
            .and_then(|lp| lp.content)
            .ok_or_else(|| LlmError::BackendLacksLogprobs("endpoint returned no logprobs".into()))?;
        let first = content
            .first()
            .ok_or_else(|| LlmError::BackendLacksLogprobs("empty logprob content".into()))?;
        let mut candidates = vec![(first.token.clone(), first.logprob)];
        for c in &first.top_logprobs {
            candidates.push((c.token.clone(), c.logprob));
        }
        let wanted = target_text.trim();
        for (token, logprob) in &candidates {
            if token.trim() == wanted {
                let mut score = TargetScore::from_logprobs(target_text, vec![*logprob])?;
                score.tokens = Some(vec![token.clone()]);
                return Ok(score);
            }
        }
        Err(LlmError::BackendLacksLogprobs(format!(
            "target `{wanted}` not among top {} logprobs",
            self.top_logprobs
        )))
    }
}

impl Backend for HttpBackend {
    fn generate(&self, dialogue: &[ChatMessage], sampling: &Sampling) -> Result<CompletionResult, LlmError> {
        check_dialogue(dialogue)?;
        let body = json!({
            "model": self.model,
            "messages": wire_messages(dialogue),
            "temperature": sampling.temperature,
            "max_tokens": sampling.max_tokens,
            "logprobs": true,
        });
        let (value, attempts) = self.post_json("/chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| LlmError::MalformedResponse(format!("bad chat response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::MalformedResponse("no choices in response".into()))?;
        let token_logprobs = choice
            .logprobs
            .and_then(|lp| lp.content)
            .map(|content| content.into_iter().map(|t| (t.token, t.logprob)).collect::<Vec<_>>());
        Ok(CompletionResult {
            text: choice.message.map(|m| m.content).unwrap_or_default(),
            token_logprobs,
            finish_reason: choice.finish_reason,
            attempts,
        })
    }

    fn score_target(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError> {
        check_dialogue(dialogue)?;
        if target_text.is_empty() {
            return Err(LlmError::EmptyTarget);
        }
        match self.score_mode {
            ScoreMode::Echo => self.score_by_echo(dialogue, target_text),
            ScoreMode::TopLogprobs => self.score_by_top_logprobs(dialogue, target_text),
        }
    }
}

fn wire_messages(dialogue: &[ChatMessage]) -> serde_json::Value {
    json!(dialogue
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({"role": role, "content": m.content})
        })
        .collect::<Vec<_>>())
}

/// Text transcript used by echo scoring. One fixed rendering; the endpoint's
/// own tokenization of it is recorded in the returned score.
pub(crate) fn flatten_dialogue(dialogue: &[ChatMessage]) -> String {
    let mut out = String::new();
    for message in dialogue {
        match message.role {
            Role::System => {
                out.push_str(&message.content);
                out.push_str("\n\n");
            }
            Role::User => {
                out.push_str("User: ");
                out.push_str(&message.content);
                out.push('\n');
            }
            Role::Assistant => {
                out.push_str("Assistant: ");
                out.push_str(&message.content);
                out.push('\n');
            }
        }
    }
    out.push_str("Assistant: ");
    out
}

fn truncate(s: &str, max: usize) -> &str {
    if s.len() <= max {
        s
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        &s[..end]
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: Option<ChatResponseMessage>,
    finish_reason: Option<String>,
    logprobs: Option<ChatLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatLogprobs {
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopCandidate>,
}

#[derive(Debug, Deserialize)]
struct TopCandidate {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct EchoResponse {
    choices: Vec<EchoChoice>,
}

#[derive(Debug, Deserialize)]
struct EchoChoice {
    logprobs: Option<EchoLogprobs>,
}

#[derive(Debug, Deserialize)]
struct EchoLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_capped_exponential() {
        let retry = RetryPolicy {
            max_attempts: 6,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(450),
        };
        assert_eq!(retry.backoff(0), Duration::from_millis(100));
        assert_eq!(retry.backoff(1), Duration::from_millis(200));
        assert_eq!(retry.backoff(2), Duration::from_millis(400));
        assert_eq!(retry.backoff(3), Duration::from_millis(450));
        assert_eq!(retry.backoff(10), Duration::from_millis(450));
    }

    #[test]
    fn transcript_puts_target_after_assistant_tag() {
        let dialogue = vec![
            ChatMessage::system("Rules here."),
            ChatMessage::user("9 4 1"),
        ];
        let text = flatten_dialogue(&dialogue);
        assert_eq!(text, "Rules here.\n\nUser: 9 4 1\nAssistant: ");
    }

    #[test]
    fn unreachable_endpoint_reports_attempt_count() {
        let backend = HttpBackend::new("http://127.0.0.1:1", "m").with_retry(RetryPolicy {
            max_attempts: 2,
            initial_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(2),
        });
        let dialogue = vec![ChatMessage::user("hello")];
        match backend.generate(&dialogue, &Sampling::default()) {
            Err(LlmError::EndpointUnreachable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn echo_parsing_extracts_target_suffix() {
        // Exercise the offset/boundary logic without a live server.
        let raw = serde_json::json!({
            "choices": [{
                "logprobs": {
                    "tokens": ["User", ":", " 9", " Assistant", ":", " 4", " 1"],
                    "token_logprobs": [null, -0.5, -0.1, -0.2, -0.3, 0.5f64.ln(), 0.25f64.ln()],
                    "text_offset": [0, 4, 5, 8, 18, 19, 21]
                }
            }]
        });
        let parsed: EchoResponse = serde_json::from_value(raw).unwrap();
        let lp = parsed.choices[0].logprobs.as_ref().unwrap();
        // boundary chosen to keep only the last two tokens
        let boundary = 19;
        let kept: Vec<f64> = (0..lp.tokens.len())
            .filter(|&i| lp.text_offset[i] >= boundary)
            .map(|i| lp.token_logprobs[i].unwrap())
            .collect();
        let score = TargetScore::from_logprobs("4 1", kept).unwrap();
        let expected = (0.5 * 0.25_f64).powf(-0.5);
        assert!((score.perplexity - expected).abs() < 1e-9);
    }
}
