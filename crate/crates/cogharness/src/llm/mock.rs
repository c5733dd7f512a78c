//! Scripted mock backend for offline runs and tests.
//!
//! A mock is driven by a plain-text script of ordered rules:
//!
//! ```text
//! # comment
//! on "BBV" -> L          # substring match on the last user message
//! turn -> 4              # fires when the dialogue is at this turn index
//! turn -> 2              # (k-th `turn` rule answers turn k, 0-based)
//! default -> M           # fallback when nothing else matches
//! score "4 1 3" -> -0.2 -0.1 -0.4   # logprobs returned for this target
//! token_logprob -0.05    # default per-token logprob for everything else
//! ```
//!
//! Resolution order per request: `on` rules in file order, then the `turn`
//! rule for the current turn index, then `default`. The turn index is the
//! number of assistant messages already in the dialogue, so a single script
//! drives many parallel dialogues without shared state. Responses may be
//! double-quoted to carry leading/trailing spaces or `\n`/`\t` escapes.
//!
//! Mocks are pure functions of the dialogue: the same input always produces
//! the same bytes, which is what makes end-to-end runs reproducible.

use super::{check_dialogue, Backend, ChatMessage, CompletionResult, LlmError, Role, Sampling, TargetScore};

/// Mock backend replaying a response script.
#[derive(Debug, Clone)]
pub struct MockBackend {
    on_rules: Vec<(String, String)>,
    turn_rules: Vec<String>,
    default_rule: Option<String>,
    score_rules: Vec<(String, Vec<f64>)>,
    token_logprob: f64,
}

impl MockBackend {
    /// Mock that answers every request with the same text.
    pub fn fixed(response: impl Into<String>) -> Self {
        Self {
            on_rules: Vec::new(),
            turn_rules: Vec::new(),
            default_rule: Some(response.into()),
            score_rules: Vec::new(),
            token_logprob: 0.0,
        }
    }

    /// Parse a script (see module docs for the grammar).
    pub fn from_script(script: &str) -> Result<Self, LlmError> {
        let mut mock = Self {
            on_rules: Vec::new(),
            turn_rules: Vec::new(),
            default_rule: None,
            score_rules: Vec::new(),
            token_logprob: 0.0,
        };
        for (i, raw) in script.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("turn") {
                let response = parse_arrow(rest, lineno)?;
                mock.turn_rules.push(response);
            } else if let Some(rest) = line.strip_prefix("on ") {
                let (pattern, rest) = parse_quoted(rest.trim_start(), lineno)?;
                let response = parse_arrow(rest, lineno)?;
                mock.on_rules.push((pattern, response));
            } else if let Some(rest) = line.strip_prefix("default") {
                let response = parse_arrow(rest, lineno)?;
                mock.default_rule = Some(response);
            } else if let Some(rest) = line.strip_prefix("score ") {
                let (target, rest) = parse_quoted(rest.trim_start(), lineno)?;
                let arrow = rest.trim_start();
                let arrow = arrow.strip_prefix("->").ok_or_else(|| LlmError::ScriptParse {
                    line: lineno,
                    detail: "expected `->` after score target".into(),
                })?;
                let logprobs = arrow
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| LlmError::ScriptParse {
                            line: lineno,
                            detail: format!("bad logprob `{tok}`"),
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                if logprobs.is_empty() {
                    return Err(LlmError::ScriptParse { line: lineno, detail: "score rule needs at least one logprob".into() });
                }
                mock.score_rules.push((target, logprobs));
            } else if let Some(rest) = line.strip_prefix("token_logprob") {
                let value = rest.trim().parse::<f64>().map_err(|_| LlmError::ScriptParse {
                    line: lineno,
                    detail: format!("bad logprob `{}`", rest.trim()),
                })?;
                mock.token_logprob = value;
            } else {
                return Err(LlmError::ScriptParse { line: lineno, detail: format!("unrecognized rule `{line}`") });
            }
        }
        Ok(mock)
    }

    /// Read a script from a file.
    pub fn from_script_file(path: impl AsRef<std::path::Path>) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| LlmError::ScriptParse {
            line: 0,
            detail: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::from_script(&text)
    }

    fn respond(&self, dialogue: &[ChatMessage]) -> Result<String, LlmError> {
        let turn = dialogue.iter().filter(|m| m.role == Role::Assistant).count();
        let last_user = dialogue
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        for (pattern, response) in &self.on_rules {
            if last_user.contains(pattern.as_str()) {
                return Ok(response.clone());
            }
        }
        if let Some(response) = self.turn_rules.get(turn) {
            return Ok(response.clone());
        }
        if let Some(response) = &self.default_rule {
            return Ok(response.clone());
        }
        Err(LlmError::ScriptExhausted { turn })
    }

    fn logprobs_for(&self, target: &str) -> Vec<f64> {
        for (scripted, logprobs) in &self.score_rules {
            if scripted == target {
                return logprobs.clone();
            }
        }
        // One synthetic token per whitespace-separated chunk.
        let count = target.split_whitespace().count().max(1);
        vec![self.token_logprob; count]
    }
}

impl Backend for MockBackend {
    fn generate(&self, dialogue: &[ChatMessage], _sampling: &Sampling) -> Result<CompletionResult, LlmError> {
        check_dialogue(dialogue)?;
        let text = self.respond(dialogue)?;
        let token_logprobs = text
            .split_whitespace()
            .map(|tok| (tok.to_string(), self.token_logprob))
            .collect::<Vec<_>>();
        Ok(CompletionResult {
            text,
            token_logprobs: Some(token_logprobs),
            finish_reason: Some("stop".into()),
            attempts: 1,
        })
    }

    fn score_target(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError> {
        check_dialogue(dialogue)?;
        if target_text.is_empty() {
            return Err(LlmError::EmptyTarget);
        }
        TargetScore::from_logprobs(target_text, self.logprobs_for(target_text))
    }
}

/// Backend computing responses with a closure; handy for scripted agents
/// that need to look at the dialogue (lag-k players, echo agents, request
/// recorders).
pub struct FnBackend<F> {
    respond: F,
    token_logprob: f64,
}

impl<F> FnBackend<F>
where
    F: Fn(&[ChatMessage]) -> String + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond, token_logprob: 0.0 }
    }

    /// Per-token logprob reported for generations and target scores.
    pub fn with_token_logprob(mut self, logprob: f64) -> Self {
        self.token_logprob = logprob;
        self
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&[ChatMessage]) -> String + Send + Sync,
{
    fn generate(&self, dialogue: &[ChatMessage], _sampling: &Sampling) -> Result<CompletionResult, LlmError> {
        check_dialogue(dialogue)?;
        let text = (self.respond)(dialogue);
        let token_logprobs = text
            .split_whitespace()
            .map(|tok| (tok.to_string(), self.token_logprob))
            .collect::<Vec<_>>();
        Ok(CompletionResult { text, token_logprobs: Some(token_logprobs), finish_reason: Some("stop".into()), attempts: 1 })
    }

    fn score_target(&self, dialogue: &[ChatMessage], target_text: &str) -> Result<TargetScore, LlmError> {
        check_dialogue(dialogue)?;
        if target_text.is_empty() {
            return Err(LlmError::EmptyTarget);
        }
        let count = target_text.split_whitespace().count().max(1);
        TargetScore::from_logprobs(target_text, vec![self.token_logprob; count])
    }
}

fn parse_arrow(rest: &str, lineno: usize) -> Result<String, LlmError> {
    let rest = rest.trim_start();
    let rest = rest
        .strip_prefix("->")
        .ok_or_else(|| LlmError::ScriptParse { line: lineno, detail: "expected `->`".into() })?;
    let value = rest.trim();
    if value.starts_with('"') {
        let (unquoted, leftover) = parse_quoted(value, lineno)?;
        if !leftover.trim().is_empty() {
            return Err(LlmError::ScriptParse { line: lineno, detail: "trailing text after quoted response".into() });
        }
        Ok(unquoted)
    } else if value.is_empty() {
        Err(LlmError::ScriptParse { line: lineno, detail: "empty response".into() })
    } else {
        Ok(value.to_string())
    }
}

/// Parse a leading double-quoted string, returning (content, remainder).
fn parse_quoted(input: &str, lineno: usize) -> Result<(String, &str), LlmError> {
    let rest = input
        .strip_prefix('"')
        .ok_or_else(|| LlmError::ScriptParse { line: lineno, detail: "expected opening quote".into() })?;
    let mut out = String::new();
    let mut chars = rest.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Ok((out, &rest[i + 1..])),
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, '"')) => out.push('"'),
                Some((_, '\\')) => out.push('\\'),
                other => {
                    return Err(LlmError::ScriptParse {
                        line: lineno,
                        detail: format!("bad escape `\\{}`", other.map(|(_, c)| c).unwrap_or(' ')),
                    })
                }
            },
            c => out.push(c),
        }
    }
    Err(LlmError::ScriptParse { line: lineno, detail: "unterminated quote".into() })
}
