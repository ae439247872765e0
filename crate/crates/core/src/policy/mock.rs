//! Scripted and simulated policies for tests, fixtures, and calibration.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GenerationRequest, GenerationResult, PolicyBackend, PolicyError, StopReason};
use crate::rollout::VerificationInstance;

/// Replays scripted continuations keyed by `(instance_id, turn_index)`,
/// with a per-turn fallback that applies to any instance. Keying on ids
/// rather than context hashes keeps fixtures stable under prompt edits.
#[derive(Debug, Default, Clone)]
pub struct MockPolicy {
    by_instance_turn: HashMap<(String, usize), String>,
    by_turn: HashMap<usize, String>,
}

impl MockPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scripts one continuation for a specific instance and turn.
    pub fn script(mut self, instance_id: &str, turn_index: usize, text: &str) -> Self {
        self.by_instance_turn
            .insert((instance_id.to_string(), turn_index), text.to_string());
        self
    }

    /// Scripts a continuation served to every instance at `turn_index`.
    pub fn script_turn(mut self, turn_index: usize, text: &str) -> Self {
        self.by_turn.insert(turn_index, text.to_string());
        self
    }

    /// Turn-indexed script shared by all instances.
    pub fn sequence<S: AsRef<str>>(turns: impl IntoIterator<Item = S>) -> Self {
        let mut policy = Self::new();
        for (i, text) in turns.into_iter().enumerate() {
            policy.by_turn.insert(i, text.as_ref().to_string());
        }
        policy
    }
}

fn stop_reason_for(text: &str, req: &GenerationRequest) -> StopReason {
    if req
        .stop_sequences
        .iter()
        .any(|s| text.ends_with(s.as_str()))
    {
        StopReason::StopSequence
    } else {
        StopReason::EndOfText
    }
}

impl PolicyBackend for MockPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let keyed = self
            .by_instance_turn
            .get(&(req.instance_id.clone(), req.turn_index))
            .or_else(|| self.by_turn.get(&req.turn_index));
        match keyed {
            Some(text) => Ok(GenerationResult {
                text: text.clone(),
                stop_reason: stop_reason_for(text, req),
                token_logprobs: None,
            }),
            None => Err(PolicyError::ScriptExhausted {
                instance_id: req.instance_id.clone(),
                turn_index: req.turn_index,
            }),
        }
    }

    fn judgment_logits(&self, _context: &str) -> Result<(f64, f64), PolicyError> {
        Err(PolicyError::LogitsUnavailable(
            "mock policy has no logits".into(),
        ))
    }
}

/// Emits a minimal well-formed trajectory whose judgment is "1" with
/// probability `p_one`, independently per request seed. With `p_one = 0.5`
/// this is the coin-flip policy: against balanced gold labels its reward is
/// Bernoulli(1/2) regardless of the instance.
#[derive(Debug, Clone, Copy)]
pub struct RandomJudgmentPolicy {
    pub p_one: f64,
}

impl PolicyBackend for RandomJudgmentPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let judgment = if rng.random_bool(self.p_one) {
            "1"
        } else {
            "0"
        };
        let text = format!("<think>weighing the trace</think>\n<answer>{judgment}</answer>");
        Ok(GenerationResult {
            text,
            stop_reason: StopReason::StopSequence,
            token_logprobs: None,
        })
    }

    fn judgment_logits(&self, _context: &str) -> Result<(f64, f64), PolicyError> {
        Err(PolicyError::LogitsUnavailable(
            "random policy has no logits".into(),
        ))
    }
}

/// Judges each known instance correctly with probability `accuracy`
/// (1.0 = oracle, 0.0 = adversary). Unknown instances are judged "1".
#[derive(Debug, Clone)]
pub struct JudgmentLookupPolicy {
    gold: HashMap<String, u8>,
    pub accuracy: f64,
}

impl JudgmentLookupPolicy {
    pub fn oracle(instances: &[VerificationInstance]) -> Self {
        Self::with_accuracy(instances, 1.0)
    }

    pub fn with_accuracy(instances: &[VerificationInstance], accuracy: f64) -> Self {
        let gold = instances
            .iter()
            .map(|ins| (ins.instance_id.clone(), ins.gold_label))
            .collect();
        JudgmentLookupPolicy { gold, accuracy }
    }
}

impl PolicyBackend for JudgmentLookupPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let gold = self.gold.get(&req.instance_id).copied().unwrap_or(1);
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let judgment = if rng.random_bool(self.accuracy) {
            gold
        } else {
            1 - gold
        };
        let text = format!("<think>recalling the claim</think>\n<answer>{judgment}</answer>");
        Ok(GenerationResult {
            text,
            stop_reason: StopReason::StopSequence,
            token_logprobs: None,
        })
    }

    fn judgment_logits(&self, _context: &str) -> Result<(f64, f64), PolicyError> {
        Err(PolicyError::LogitsUnavailable(
            "lookup policy has no logits".into(),
        ))
    }
}

/// Requests another search every turn; used to exercise turn caps.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysSearchPolicy;

impl PolicyBackend for AlwaysSearchPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let text = format!(
            "<think>still unsure</think>\n<search>follow-up {}</search>",
            req.turn_index
        );
        Ok(GenerationResult {
            text,
            stop_reason: StopReason::StopSequence,
            token_logprobs: None,
        })
    }

    fn judgment_logits(&self, _context: &str) -> Result<(f64, f64), PolicyError> {
        Err(PolicyError::LogitsUnavailable(
            "scripted policy has no logits".into(),
        ))
    }
}
