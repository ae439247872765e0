//! OpenAI-compatible chat-completions backend.
//!
//! Sends the assembled context as a single user message and reads the first
//! choice. Chat APIs strip the matched stop sequence from the returned
//! text, but the rollout protocol needs the trajectory to contain it, so a
//! stripped `</search>` / `</answer>` is restored by looking for the
//! dangling opening tag.
//!
//! Judgment logits come from a one-token completion with `logprobs`
//! enabled; backends that do not return top logprobs for both "1" and "0"
//! fail with `LogitsUnavailable` and callers fall back to hard judgments.

use serde::Deserialize;
use serde_json::json;

use super::{GenerationRequest, GenerationResult, PolicyBackend, PolicyError, StopReason};

/// Environment variable consulted for the bearer token.
pub const API_KEY_ENV: &str = "VERISEEK_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteChatPolicy {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl RemoteChatPolicy {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChatPolicy {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            timeout_secs: 60,
        }
    }

    fn post(&self, body: &serde_json::Value) -> Result<ChatResponse, PolicyError> {
        let agent = crate::httpclient::agent(self.timeout_secs);
        let mut request = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        request
            .send_json(body)
            .map_err(|e| PolicyError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| PolicyError::Transport(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<LogprobPayload>,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Deserialize)]
struct LogprobPayload {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

/// Restores a stop sequence the API stripped: if the text has an opening
/// `<search>` or `<answer>` with no matching close after it, append the
/// close. Returns the matched stop sequence if the text now ends with one.
fn restore_stop_sequence(text: &mut String, stop_sequences: &[String]) -> bool {
    if stop_sequences.iter().any(|s| text.ends_with(s.as_str())) {
        return true;
    }
    for (open, close) in [("<search>", "</search>"), ("<answer>", "</answer>")] {
        if !stop_sequences.iter().any(|s| s == close) {
            continue;
        }
        if let Some(open_ix) = text.rfind(open) {
            if !text[open_ix..].contains(close) {
                text.push_str(close);
                return true;
            }
        }
    }
    false
}

impl PolicyBackend for RemoteChatPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.context}],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_new_tokens,
            "stop": req.stop_sequences,
        });
        let response = self.post(&body)?;
        let choice = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| PolicyError::Transport("response has no choices".into()))?;

        let mut text = choice.message.content;
        let finish = choice.finish_reason.as_deref().unwrap_or("stop");
        let stop_reason = match finish {
            "length" => StopReason::MaxTokens,
            "stop" => {
                if restore_stop_sequence(&mut text, &req.stop_sequences) {
                    StopReason::StopSequence
                } else {
                    StopReason::EndOfText
                }
            }
            _ => StopReason::EndOfText,
        };

        let token_logprobs = choice.logprobs.map(|lp| {
            lp.content
                .into_iter()
                .map(|t| (t.token, t.logprob))
                .collect::<Vec<_>>()
        });

        Ok(GenerationResult {
            text,
            stop_reason,
            token_logprobs,
        })
    }

    fn judgment_logits(&self, context: &str) -> Result<(f64, f64), PolicyError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": context}],
            "temperature": 0.0,
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": 20,
        });
        let response = self.post(&body)?;
        let choice = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| PolicyError::Transport("response has no choices".into()))?;
        let first_token = choice
            .logprobs
            .and_then(|lp| lp.content.into_iter().next())
            .ok_or_else(|| PolicyError::LogitsUnavailable("no logprobs in response".into()))?;

        let mut z1 = None;
        let mut z0 = None;
        let mut consider = |token: &str, logprob: f64| match token.trim() {
            "1" => z1 = z1.or(Some(logprob)),
            "0" => z0 = z0.or(Some(logprob)),
            _ => {}
        };
        consider(&first_token.token, first_token.logprob);
        for top in &first_token.top_logprobs {
            consider(&top.token, top.logprob);
        }
        match (z1, z0) {
            (Some(z1), Some(z0)) => Ok((z1, z0)),
            _ => Err(PolicyError::LogitsUnavailable(
                "top logprobs do not cover both judgment tokens".into(),
            )),
        }
    }
}
