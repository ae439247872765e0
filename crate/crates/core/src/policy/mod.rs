//! Generation backends for the verifier policy.
//!
//! Three interchangeable implementations sit behind [`PolicyBackend`]:
//!
//! - [`mock::MockPolicy`] and friends — scripted continuations for tests
//!   and deterministic fixtures;
//! - [`toy::ToySoftmaxPolicy`] — a small trainable softmax policy over a
//!   fixed vocabulary, the in-process stand-in used to validate the RL
//!   machinery end to end;
//! - [`remote::RemoteChatPolicy`] — an OpenAI-compatible chat-completions
//!   client (evaluation only).
//!
//! A backend is a pure function of the request: sampling randomness comes
//! from `GenerationRequest::seed`, so grouped rollouts are reproducible.

pub mod mock;
pub mod remote;
pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("mock script exhausted for instance {instance_id:?} turn {turn_index}")]
    ScriptExhausted {
        instance_id: String,
        turn_index: usize,
    },
    #[error("backend does not expose judgment-token logits: {0}")]
    LogitsUnavailable(String),
    #[error("cannot tokenize {fragment:?} at byte {offset}")]
    UnknownToken { fragment: String, offset: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

/// One generation call: the assembled context plus sampling controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub context: String,
    pub stop_sequences: Vec<String>,
    pub temperature: f64,
    /// Nucleus sampling mass in (0, 1].
    pub top_p: f64,
    pub max_new_tokens: usize,
    /// Drives all sampling randomness for this call.
    pub seed: u64,
    /// Routing metadata for scripted backends; ignored by the others.
    pub instance_id: String,
    pub turn_index: usize,
}

impl GenerationRequest {
    pub fn new(context: impl Into<String>) -> Self {
        GenerationRequest {
            context: context.into(),
            stop_sequences: vec!["</search>".to_string(), "</answer>".to_string()],
            temperature: 1.0,
            top_p: 0.95,
            max_new_tokens: 256,
            seed: 0,
            instance_id: String::new(),
            turn_index: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.temperature < 0.0 {
            return Err(PolicyError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PolicyError::InvalidRequest(
                "top_p must be in (0, 1]".into(),
            ));
        }
        if self.max_new_tokens == 0 {
            return Err(PolicyError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    StopSequence,
    MaxTokens,
    EndOfText,
}

/// A generated continuation. When `stop_reason` is `StopSequence` the text
/// ends with the matched stop sequence (backends re-append it if their
/// transport strips it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub stop_reason: StopReason,
    /// Per-token log-probabilities under the backend's own distribution,
    /// for backends that expose them.
    pub token_logprobs: Option<Vec<(String, f64)>>,
}

/// Uniform interface over the verifier policies.
pub trait PolicyBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError>;

    /// Logits `(z1, z0)` for the judgment tokens "1" and "0" at the position
    /// immediately following `context` (which is expected to end right
    /// after an `<answer>` tag). Backends without logit access fail with
    /// `LogitsUnavailable`.
    fn judgment_logits(&self, context: &str) -> Result<(f64, f64), PolicyError>;
}

/// Two-way softmax of the "1" logit against the "0" logit.
pub fn confidence_from_logits(z1: f64, z0: f64) -> f64 {
    1.0 / (1.0 + (z0 - z1).exp())
}

/// Confidence that the verifier would judge the trace correct, read off the
/// backend's judgment-token logits.
pub fn judgment_confidence(backend: &dyn PolicyBackend, context: &str) -> Result<f64, PolicyError> {
    let (z1, z0) = backend.judgment_logits(context)?;
    Ok(confidence_from_logits(z1, z0))
}
