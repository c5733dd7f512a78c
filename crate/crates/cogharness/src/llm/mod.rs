//! Chat-completion backends.
//!
//! A [`Backend`] answers two questions about a dialogue: what does the model
//! say next ([`Backend::generate`]), and how likely is a given target
//! continuation ([`Backend::score_target`])? The live implementation speaks
//! the widely deployed chat-completions wire protocol ([`http::HttpBackend`]);
//! [`mock::MockBackend`] replays scripted responses for offline runs and
//! tests.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Message role in a chat dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One turn of a chat dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Sampling parameters for generation requests.
///
/// The default is greedy decoding (temperature 0) so that repeated runs are
/// reproducible; experiments that want sampling opt in via config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 64 }
    }
}

/// Result of a generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Generated text.
    pub text: String,
    /// Per-token log-probabilities of the generated tokens, in order, when
    /// the endpoint exposes them.
    pub token_logprobs: Option<Vec<(String, f64)>>,
    pub finish_reason: Option<String>,
    /// How many request attempts it took (1 = no retries).
    pub attempts: u32,
}

/// Probability measurement of a forced target continuation.
///
/// For a single-token target the score is the token's probability
/// `exp(logprob)`. For multi-token targets the score is the perplexity
/// `exp(-mean(logprobs))`, which is `1.0` when every token has probability 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub target_text: String,
    /// Log-probability of each target token, in target order. All ≤ 0.
    pub token_logprobs: Vec<f64>,
    /// `exp(logprob)`; present only for single-token targets.
    pub probability: Option<f64>,
    /// `exp(-mean(token_logprobs))`; always ≥ 1 for valid logprobs.
    pub perplexity: f64,
    /// The endpoint's own tokenization of the target, when reported.
    /// Perplexities from endpoints with different tokenizers are not
    /// directly comparable; keeping the tokens in the run log makes that
    /// checkable after the fact.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tokens: Option<Vec<String>>,
}

impl TargetScore {
    /// Build a score from raw per-token logprobs.
    pub fn from_logprobs(target_text: impl Into<String>, token_logprobs: Vec<f64>) -> Result<Self, LlmError> {
        if token_logprobs.is_empty() {
            return Err(LlmError::MalformedResponse("no logprobs returned for target".into()));
        }
        let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
        let probability = (token_logprobs.len() == 1).then(|| token_logprobs[0].exp());
        Ok(Self {
            target_text: target_text.into(),
            token_logprobs,
            probability,
            perplexity: (-mean).exp(),
            tokens: None,
        })
    }
}

/// Errors surfaced by backends.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint unreachable after {attempts} attempts: {detail}")]
    EndpointUnreachable { attempts: u32, detail: String },
    #[error("rate limited; gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    /// The endpoint cannot report logprobs for this target. The runner
    /// records the trial generation-only and flags the report.
    #[error("backend lacks logprob support: {0}")]
    BackendLacksLogprobs(String),
    #[error("dialogue is empty")]
    EmptyDialogue,
    #[error("last dialogue message must be a user turn")]
    LastMessageNotUser,
    #[error("dialogue message {index} has empty content")]
    EmptyMessage { index: usize },
    #[error("target text is empty")]
    EmptyTarget,
    #[error("mock script line {line}: {detail}")]
    ScriptParse { line: usize, detail: String },
    #[error("mock script has no rule matching request (turn {turn})")]
    ScriptExhausted { turn: usize },
}

impl LlmError {
    /// Attempt count carried by retry-exhaustion errors.
    pub fn attempts(&self) -> Option<u32> {
        match self {
            LlmError::EndpointUnreachable { attempts, .. } | LlmError::RateLimited { attempts } => Some(*attempts),
            _ => None,
        }
    }
}

/// A chat-completion endpoint (live or mock).
///
/// Implementations must be shareable across parallel in-flight requests; the
/// runner enforces the experiment's concurrency limit above this trait.
pub trait Backend: Send + Sync {
    fn generate(&self, dialogue: &[ChatMessage], sampling: &Sampling) -> Result<CompletionResult, LlmError>;

    /// Force `target_text` as the continuation of `dialogue` and return its
    /// per-token logprobs.
    fn score_target(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError>;
}

/// Shared precondition check: dialogue nonempty, user/assistant contents
/// nonempty, last message from the user.
pub(crate) fn check_dialogue(dialogue: &[ChatMessage]) -> Result<(), LlmError> {
    if dialogue.is_empty() {
        return Err(LlmError::EmptyDialogue);
    }
    for (index, message) in dialogue.iter().enumerate() {
        if message.role != Role::System && message.content.is_empty() {
            return Err(LlmError::EmptyMessage { index });
        }
    }
    if dialogue.last().map(|m| m.role) != Some(Role::User) {
        return Err(LlmError::LastMessageNotUser);
    }
    Ok(())
}
