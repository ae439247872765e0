//! A trainable toy policy: linear softmax over hashed context features.
//!
//! The policy owns a small fixed vocabulary (the eight protocol tags, the
//! digits, and the task words of the bundled synthetic corpus). Context is
//! reduced to the last eight non-whitespace tokens; each of those tokens
//! contributes one position-tagged feature and one unordered bag feature,
//! hashed into `feature_dim` buckets. Logits are `θ · φ(context)`, so the
//! whole model is a `|V| × feature_dim` matrix — big enough for RL to move
//! judgment behavior measurably, small enough to finite-difference.
//!
//! `seeded_for_verification` installs a weak transition prior over the tag
//! skeleton (think → answer → judgment), playing the role of the pretrained
//! base model in the RL-zero setup: the untrained policy already emits
//! mostly well-formed trajectories but judges at chance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, GenerationResult, PolicyBackend, PolicyError, StopReason};
use crate::util::fnv1a_parts;

/// Number of trailing tokens that make up the context features.
pub const FEATURE_WINDOW: usize = 8;

/// Only this many trailing bytes of context are tokenized for features.
const TAIL_BYTES: usize = 160;

/// Default hashed feature dimensionality.
pub const DEFAULT_FEATURE_DIM: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyVocab {
    tokens: Vec<String>,
}

impl ToyVocab {
    /// Tag tokens, digits, punctuation, and the word list of the bundled
    /// synthetic verification task.
    pub fn verification_default() -> Self {
        let mut tokens: Vec<String> = Vec::new();
        for tag in crate::protocol::all_tags() {
            tokens.push(tag.to_string());
        }
        for d in 0..10u8 {
            tokens.push(d.to_string());
        }
        for word in [
            "plus", "equals", "fact", "card", "recall", "evaluate", "claim", "verify", "check",
            "the", "that", "we", "must", "thus", "states", "results", "found", "correct", "wrong",
            "No", "f",
        ] {
            tokens.push(word.to_string());
        }
        for punct in [" ", "\n", ".", ":", ",", "?", "[", "]", "(", ")", "-"] {
            tokens.push(punct.to_string());
        }
        ToyVocab { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    fn longest_match(&self, text: &str) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (id, tok) in self.tokens.iter().enumerate() {
            if text.starts_with(tok.as_str())
                && best.is_none_or(|b| tok.len() > self.tokens[b].len())
            {
                best = Some(id);
            }
        }
        best
    }

    /// Greedy longest-match tokenization. Fails on any text outside the
    /// vocabulary; training continuations must tokenize exactly.
    pub fn tokenize_strict(&self, text: &str) -> Result<Vec<usize>, PolicyError> {
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            match self.longest_match(&text[pos..]) {
                Some(id) => {
                    ids.push(id);
                    pos += self.tokens[id].len();
                }
                None => {
                    let fragment: String = text[pos..].chars().take(12).collect();
                    return Err(PolicyError::UnknownToken {
                        fragment,
                        offset: pos,
                    });
                }
            }
        }
        Ok(ids)
    }

    /// Greedy tokenization that never fails: unknown characters become
    /// single-character tokens. Used only for feature extraction.
    pub fn tokenize_lenient(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            match self.longest_match(&text[pos..]) {
                Some(id) => {
                    out.push(self.tokens[id].clone());
                    pos += self.tokens[id].len();
                }
                None => {
                    let ch = text[pos..].chars().next().expect("non-empty remainder");
                    out.push(ch.to_string());
                    pos += ch.len_utf8();
                }
            }
        }
        out
    }
}

fn positional_feature(token: &str, slot: usize, dim: usize) -> usize {
    (fnv1a_parts(&[b"pos", &[slot as u8], token.as_bytes()]) % dim as u64) as usize
}

fn bag_feature(token: &str, dim: usize) -> usize {
    (fnv1a_parts(&[b"bag", token.as_bytes()]) % dim as u64) as usize
}

fn bias_feature(dim: usize) -> usize {
    (fnv1a_parts(&[b"bias"]) % dim as u64) as usize
}

/// Rolling window of the last [`FEATURE_WINDOW`] non-whitespace tokens.
#[derive(Debug, Clone, Default)]
pub struct FeatureTail {
    window: Vec<String>,
}

impl FeatureTail {
    pub fn from_text(vocab: &ToyVocab, text: &str) -> Self {
        // Only the trailing bytes can influence an 8-token window.
        let mut start = text.len().saturating_sub(TAIL_BYTES);
        while !text.is_char_boundary(start) {
            start += 1;
        }
        let mut tail = FeatureTail::default();
        for token in vocab.tokenize_lenient(&text[start..]) {
            tail.push(&token);
        }
        tail
    }

    pub fn push(&mut self, token: &str) {
        if token.trim().is_empty() {
            return;
        }
        if self.window.len() == FEATURE_WINDOW {
            self.window.remove(0);
        }
        self.window.push(token.to_string());
    }

    pub fn push_text(&mut self, vocab: &ToyVocab, text: &str) {
        for token in vocab.tokenize_lenient(text) {
            self.push(&token);
        }
    }

    /// Active feature indices (with multiplicity): an always-on bias, plus
    /// one positional and one bag feature per token in the window. Slot 0
    /// is the most recent token.
    pub fn feature_indices(&self, dim: usize) -> Vec<usize> {
        let mut indices = Vec::with_capacity(self.window.len() * 2 + 1);
        indices.push(bias_feature(dim));
        for (slot, token) in self.window.iter().rev().enumerate() {
            indices.push(positional_feature(token, slot, dim));
            indices.push(bag_feature(token, dim));
        }
        indices
    }
}

/// A batch entry for [`ToySoftmaxPolicy::gradient`]: per-token weights over
/// a continuation given its context.
pub struct WeightedSequence<'a> {
    pub context: &'a str,
    pub continuation: &'a str,
    pub token_weights: &'a [f64],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySoftmaxPolicy {
    vocab: ToyVocab,
    feature_dim: usize,
    /// Row-major `|V| × feature_dim`.
    weights: Vec<f64>,
}

impl ToySoftmaxPolicy {
    pub fn zeroed(vocab: ToyVocab, feature_dim: usize) -> Self {
        let weights = vec![0.0; vocab.len() * feature_dim];
        ToySoftmaxPolicy {
            vocab,
            feature_dim,
            weights,
        }
    }

    /// Fresh policy with symmetry-breaking noise and the tag-skeleton prior,
    /// standing in for a pretrained base model: tag tokens carry a global
    /// negative bias (so they never fire mid-payload) and the legal
    /// transitions get strong positive bumps. Judgment tokens get exactly
    /// symmetric treatment so initial verification accuracy sits at chance.
    pub fn seeded_for_verification(feature_dim: usize, seed: u64) -> Self {
        let vocab = ToyVocab::verification_default();
        let mut policy = Self::zeroed(vocab, feature_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut policy.weights {
            *w = (rng.random::<f64>() - 0.5) * 0.02;
        }
        for tag in crate::protocol::all_tags() {
            policy.bump_bias(tag, -3.0);
        }
        for (prev, next, delta) in [
            (".", "<think>", 9.0),
            ("</information>", "<think>", 9.0),
            ("<think>", "check", 5.0),
            ("<think>", "</think>", 8.0),
            ("check", "</think>", 9.0),
            ("check", "check", 4.5),
            ("</think>", "<answer>", 9.0),
            ("</think>", "<search>", 7.5),
            ("<search>", "fact", 5.0),
            ("fact", "</search>", 9.0),
            ("<answer>", "0", 6.0),
            ("<answer>", "1", 6.0),
            ("0", "</answer>", 10.0),
            ("1", "</answer>", 10.0),
        ] {
            policy.bump_transition(prev, next, delta);
        }
        policy
    }

    /// Adds `delta` to the logit of `next` in contexts whose most recent
    /// token is `prev`.
    pub fn bump_transition(&mut self, prev: &str, next: &str, delta: f64) {
        let next_id = self.vocab.token_id(next).expect("next token in vocabulary");
        let feature = positional_feature(prev, 0, self.feature_dim);
        self.weights[next_id * self.feature_dim + feature] += delta;
    }

    /// Adds `delta` to `token`'s logit in every context (always-on bias).
    pub fn bump_bias(&mut self, token: &str, delta: f64) {
        let id = self.vocab.token_id(token).expect("token in vocabulary");
        self.weights[id * self.feature_dim + bias_feature(self.feature_dim)] += delta;
    }

    pub fn vocab(&self) -> &ToyVocab {
        &self.vocab
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Raw (temperature-1) logits for the next token.
    pub fn logits(&self, tail: &FeatureTail) -> Vec<f64> {
        let features = tail.feature_indices(self.feature_dim);
        let mut logits = vec![0.0; self.vocab.len()];
        for (v, logit) in logits.iter_mut().enumerate() {
            let row = &self.weights[v * self.feature_dim..(v + 1) * self.feature_dim];
            *logit = features.iter().map(|&f| row[f]).sum();
        }
        logits
    }

    fn log_softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        logits.iter().map(|z| z - lse).collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let lp = Self::log_softmax(logits);
        lp.iter().map(|l| l.exp()).collect()
    }

    fn argmax(logits: &[f64]) -> usize {
        let mut best = 0;
        for (i, z) in logits.iter().enumerate() {
            if *z > logits[best] {
                best = i;
            }
        }
        best
    }

    fn sample_top_p(probs: &[f64], top_p: f64, rng: &mut ChaCha8Rng) -> usize {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| {
            probs[b]
                .partial_cmp(&probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut kept = Vec::new();
        let mut mass = 0.0;
        for &ix in &order {
            kept.push(ix);
            mass += probs[ix];
            if mass >= top_p {
                break;
            }
        }
        let draw = rng.random::<f64>() * mass;
        let mut acc = 0.0;
        for &ix in &kept {
            acc += probs[ix];
            if draw < acc {
                return ix;
            }
        }
        *kept.last().expect("nucleus is non-empty")
    }

    /// Per-token log-probabilities of `continuation` given `context`, under
    /// the raw softmax distribution. Returns the total and the per-token
    /// breakdown, aligned one-to-one with the continuation's tokens.
    pub fn sequence_logprob(
        &self,
        context: &str,
        continuation: &str,
    ) -> Result<(f64, Vec<(String, f64)>), PolicyError> {
        let ids = self.vocab.tokenize_strict(continuation)?;
        let mut tail = FeatureTail::from_text(&self.vocab, context);
        let mut per_token = Vec::with_capacity(ids.len());
        let mut total = 0.0;
        for id in ids {
            let logits = self.logits(&tail);
            let lp = Self::log_softmax(&logits)[id];
            total += lp;
            let token = self.vocab.token(id).to_string();
            tail.push(&token);
            per_token.push((token, lp));
        }
        Ok((total, per_token))
    }

    /// Analytic gradient of `Σ_j Σ_t w_{j,t} · log π(token_t | context_j, tokens_{<t})`
    /// with respect to the weight matrix, laid out like `weights()`.
    pub fn gradient(&self, batch: &[WeightedSequence]) -> Result<Vec<f64>, PolicyError> {
        let mut grad = vec![0.0; self.weights.len()];
        for seq in batch {
            let ids = self.vocab.tokenize_strict(seq.continuation)?;
            if ids.len() != seq.token_weights.len() {
                return Err(PolicyError::ShapeMismatch {
                    expected: ids.len(),
                    actual: seq.token_weights.len(),
                });
            }
            let mut tail = FeatureTail::from_text(&self.vocab, seq.context);
            for (&id, &w) in ids.iter().zip(seq.token_weights) {
                if w != 0.0 {
                    let features = tail.feature_indices(self.feature_dim);
                    let logits = self.logits(&tail);
                    let probs = Self::softmax(&logits);
                    // ∂ log p(id) / ∂ θ[v][f] = (1[v == id] − p_v) · φ_f
                    for &f in &features {
                        for (v, &p) in probs.iter().enumerate() {
                            grad[v * self.feature_dim + f] -= w * p;
                        }
                        grad[id * self.feature_dim + f] += w;
                    }
                }
                tail.push(self.vocab.token(id));
            }
        }
        Ok(grad)
    }
}

impl PolicyBackend for ToySoftmaxPolicy {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResult, PolicyError> {
        req.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let mut tail = FeatureTail::from_text(&self.vocab, &req.context);
        let mut text = String::new();
        let mut token_logprobs = Vec::new();

        for _ in 0..req.max_new_tokens {
            let logits = self.logits(&tail);
            let id = if req.temperature == 0.0 {
                Self::argmax(&logits)
            } else {
                let scaled: Vec<f64> = logits.iter().map(|z| z / req.temperature).collect();
                let probs = Self::softmax(&scaled);
                Self::sample_top_p(&probs, req.top_p, &mut rng)
            };
            // Recorded log-probabilities are always the raw model
            // distribution; sampling controls shape behavior only.
            let lp = Self::log_softmax(&logits)[id];
            let token = self.vocab.token(id).to_string();
            text.push_str(&token);
            tail.push(&token);
            token_logprobs.push((token, lp));

            if req
                .stop_sequences
                .iter()
                .any(|s| text.ends_with(s.as_str()))
            {
                return Ok(GenerationResult {
                    text,
                    stop_reason: StopReason::StopSequence,
                    token_logprobs: Some(token_logprobs),
                });
            }
        }
        Ok(GenerationResult {
            text,
            stop_reason: StopReason::MaxTokens,
            token_logprobs: Some(token_logprobs),
        })
    }

    fn judgment_logits(&self, context: &str) -> Result<(f64, f64), PolicyError> {
        let tail = FeatureTail::from_text(&self.vocab, context);
        let logits = self.logits(&tail);
        let one = self.vocab.token_id("1").expect("vocabulary includes \"1\"");
        let zero = self.vocab.token_id("0").expect("vocabulary includes \"0\"");
        Ok((logits[one], logits[zero]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::confidence_from_logits;

    fn vocab() -> ToyVocab {
        ToyVocab::verification_default()
    }

    #[test]
    fn strict_tokenization_round_trips() {
        let v = vocab();
        let text = "<think>check 14 plus 3</think>\n<answer>1</answer>";
        let ids = v.tokenize_strict(text).unwrap();
        let rebuilt: String = ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn strict_tokenization_rejects_unknown() {
        let err = vocab().tokenize_strict("<think>xyzzy</think>").unwrap_err();
        assert!(matches!(err, PolicyError::UnknownToken { offset: 7, .. }));
    }

    #[test]
    fn lenient_tokenization_never_fails() {
        let toks = vocab().tokenize_lenient("Zz 7 plus");
        assert!(toks.contains(&"plus".to_string()));
        assert!(toks.contains(&"Z".to_string()));
    }

    #[test]
    fn digit_bag_features_are_distinct() {
        // The judgment cue is the parity of the final claim digit; if two
        // digit tokens hashed to the same bag bucket the cue would alias.
        let mut seen = std::collections::HashSet::new();
        for d in 0..10u8 {
            assert!(seen.insert(bag_feature(&d.to_string(), DEFAULT_FEATURE_DIM)));
        }
    }

    #[test]
    fn uniform_policy_logprob_is_minus_ln_v() {
        let policy = ToySoftmaxPolicy::zeroed(vocab(), 64);
        let v = policy.vocab().len() as f64;
        let (total, per) = policy.sequence_logprob("context .", "check").unwrap();
        assert_eq!(per.len(), 1);
        assert!((total + v.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_continuation_logprob() {
        let policy = ToySoftmaxPolicy::zeroed(vocab(), 64);
        let (total, per) = policy.sequence_logprob("context", "").unwrap();
        assert_eq!(total, 0.0);
        assert!(per.is_empty());
    }

    #[test]
    fn per_token_logprobs_sum_to_total() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 3);
        let (total, per) = policy.sequence_logprob("so far .", "check 12").unwrap();
        let sum: f64 = per.iter().map(|(_, lp)| lp).sum();
        assert!((total - sum).abs() < 1e-12);
    }

    #[test]
    fn greedy_generation_is_deterministic() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(256, 9);
        let mut req = GenerationRequest::new("the trace says 7 plus 7 equals 15 .\n");
        req.temperature = 0.0;
        req.max_new_tokens = 32;
        let a = policy.generate(&req).unwrap();
        let b = policy.generate(&req).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.stop_reason, b.stop_reason);
    }

    #[test]
    fn sampled_generation_is_seed_deterministic() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(256, 9);
        let mut req = GenerationRequest::new("the trace says 7 plus 7 equals 15 .\n");
        req.seed = 1234;
        req.max_new_tokens = 32;
        let a = policy.generate(&req).unwrap();
        let b = policy.generate(&req).unwrap();
        assert_eq!(a.text, b.text);
        let mut other = req.clone();
        other.seed = 1235;
        // Different seeds should usually differ; this prompt makes them.
        let c = policy.generate(&other).unwrap();
        assert!(a.text == b.text && (a.text != c.text || a.text.len() < 4) || a.text != c.text);
    }

    #[test]
    fn probabilities_normalize() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(256, 11);
        let tail = FeatureTail::from_text(policy.vocab(), "equals 15 . <think>");
        let probs = ToySoftmaxPolicy::softmax(&policy.logits(&tail));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn judgment_confidence_complement() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(256, 11);
        let ctx = "trace <think>check</think><answer>";
        let (z1, z0) = policy.judgment_logits(ctx).unwrap();
        let c = confidence_from_logits(z1, z0);
        let c_swapped = confidence_from_logits(z0, z1);
        assert!((c + c_swapped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 5);
        let grad = policy
            .gradient(&[WeightedSequence {
                context: "c .",
                continuation: "check 1",
                token_weights: &[0.0, 0.0, 0.0],
            }])
            .unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_token_gradient_matches_textbook_form() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 5);
        let context = "claim 14 .";
        let grad = policy
            .gradient(&[WeightedSequence {
                context,
                continuation: "check",
                token_weights: &[1.0],
            }])
            .unwrap();
        let tail = FeatureTail::from_text(policy.vocab(), context);
        let probs = ToySoftmaxPolicy::softmax(&policy.logits(&tail));
        let features = tail.feature_indices(policy.feature_dim());
        let tok = policy.vocab().token_id("check").unwrap();
        // Count feature multiplicity.
        let mut counts = std::collections::HashMap::new();
        for &f in &features {
            *counts.entry(f).or_insert(0.0) += 1.0;
        }
        for (&f, &count) in &counts {
            for v in 0..policy.vocab().len() {
                let expected = (if v == tok { 1.0 } else { 0.0 } - probs[v]) * count;
                let got = grad[v * policy.feature_dim() + f];
                assert!(
                    (got - expected).abs() < 1e-12,
                    "v={v} f={f}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut policy = ToySoftmaxPolicy::seeded_for_verification(64, 7);
        let context = "thus 7 plus 7 equals 15 .";
        let continuation = "<think>check</think><answer>1</answer>";
        let n_tokens = policy.vocab.tokenize_strict(continuation).unwrap().len();
        let weights: Vec<f64> = (0..n_tokens).map(|i| 0.3 + 0.1 * i as f64).collect();

        let analytic = policy
            .gradient(&[WeightedSequence {
                context,
                continuation,
                token_weights: &weights,
            }])
            .unwrap();

        let objective = |p: &ToySoftmaxPolicy| -> f64 {
            let (_, per) = p.sequence_logprob(context, continuation).unwrap();
            per.iter().zip(&weights).map(|((_, lp), w)| lp * w).sum()
        };

        let h = 1e-6;
        // Near-zero coordinates are held to an absolute tolerance tied to
        // the gradient scale; see grpo::compare_gradient_fd.
        let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let floor = (1e-3 * scale).max(1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut max_rel = 0.0f64;
        for _ in 0..120 {
            let ix = rng.random_range(0..policy.param_count());
            let orig = policy.weights()[ix];
            policy.weights_mut()[ix] = orig + h;
            let plus = objective(&policy);
            policy.weights_mut()[ix] = orig - h;
            let minus = objective(&policy);
            policy.weights_mut()[ix] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic[ix].abs().max(numeric.abs()).max(floor);
            max_rel = max_rel.max((analytic[ix] - numeric).abs() / denom);
        }
        assert!(max_rel <= 1e-5, "max relative error {max_rel}");
    }

    #[test]
    fn shape_mismatch_detected() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(64, 7);
        let err = policy
            .gradient(&[WeightedSequence {
                context: "c",
                continuation: "check",
                token_weights: &[1.0, 1.0],
            }])
            .unwrap_err();
        assert!(matches!(err, PolicyError::ShapeMismatch { .. }));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 21);
        let json = serde_json::to_string(&policy).unwrap();
        let restored: ToySoftmaxPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(policy.weights(), restored.weights());
        assert_eq!(policy.feature_dim(), restored.feature_dim());
    }
}
