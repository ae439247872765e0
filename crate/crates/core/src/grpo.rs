//! Group-relative policy optimization with a clipped token-level objective.
//!
//! For a group of G trajectories with rewards R_i, advantages are plain
//! group-mean deviations — no standard-deviation scaling and no length
//! normalization:
//!
//! ```text
//! Â_i = R_i − mean(R_1 … R_G)
//! J   = (1/G) Σ_i Σ_t min[ r_i^t Â_i, clip(r_i^t, 1−ε_l, 1+ε_h) Â_i ]
//! r_i^t = exp(logπ_new(token_t) − logπ_old(token_t))
//! ```
//!
//! Environment-injected information tokens are loss-masked by default: the
//! policy never sampled them, so their importance ratios are not
//! meaningful. The analytic gradient is verified against central finite
//! differences by [`finite_difference_check`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::policy::toy::{ToySoftmaxPolicy, WeightedSequence};
use crate::policy::PolicyError;
use crate::rollout::{assemble_prompt, RolloutGroup, RolloutPart};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("a rollout group needs at least two members, got {0}")]
    DegenerateGroup(usize),
    #[error("token shapes disagree: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Lower clip width ε_l: ratios are clamped below at 1 − ε_l.
    pub eps_low: f64,
    /// Upper clip width ε_h: ratios are clamped above at 1 + ε_h.
    pub eps_high: f64,
    pub learning_rate: f64,
    pub epochs_per_iteration: usize,
    pub mask_information_tokens: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            eps_low: 0.2,
            eps_high: 0.3,
            learning_rate: 1e-6,
            epochs_per_iteration: 5,
            mask_information_tokens: true,
        }
    }
}

impl GrpoConfig {
    /// Defaults sized for the in-process toy policy rather than an LLM.
    pub fn toy() -> Self {
        GrpoConfig {
            learning_rate: 1e-2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.eps_low > 0.0 && self.eps_low <= self.eps_high && self.eps_high < 1.0) {
            return Err("clip widths must satisfy 0 < eps_low <= eps_high < 1".into());
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        if self.epochs_per_iteration == 0 {
            return Err("epochs_per_iteration must be positive".into());
        }
        Ok(())
    }
}

/// Â_i = R_i − mean(R). Sum is zero by construction; shifting all rewards
/// by a constant leaves the result unchanged.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::DegenerateGroup(rewards.len()));
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(rewards.iter().map(|r| r - mean).collect())
}

/// One clipped surrogate term: `min(ratio·Â, clip(ratio)·Â)`.
pub fn clipped_term(ratio: f64, advantage: f64, cfg: &GrpoConfig) -> f64 {
    let clipped = ratio.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
    (ratio * advantage).min(clipped * advantage)
}

/// Token-level view of one trajectory, ready for objective evaluation.
/// `parts` mirrors the rollout's generated/injected structure so new
/// log-probabilities can be teacher-forced with the right running context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTokens {
    pub prompt: String,
    /// (text, injected) spans, concatenating to the trajectory text.
    pub parts: Vec<(String, bool)>,
    pub old_logprobs: Vec<f64>,
    pub loss_mask: Vec<bool>,
    pub advantage: f64,
}

impl TrajectoryTokens {
    pub fn unmasked_tokens(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// One instance's group of tokenized trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenGroup {
    pub trajectories: Vec<TrajectoryTokens>,
}

/// A training batch: one or more groups. The objective averages the
/// per-group Eq-style values across groups.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenBatch {
    pub groups: Vec<TokenGroup>,
}

impl TokenBatch {
    pub fn mean_advantage_magnitude(&self) -> f64 {
        let mut n = 0usize;
        let mut sum = 0.0;
        for group in &self.groups {
            for traj in &group.trajectories {
                sum += traj.advantage.abs();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Tokenizes rollout groups against `policy_old`, recording old
/// log-probabilities before any update. Where the rollout carries
/// generation-time log-probabilities they are reused; otherwise they are
/// teacher-forced, which is identical because the policy has not changed
/// since sampling.
pub fn build_token_batch(
    policy_old: &ToySoftmaxPolicy,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<TokenBatch, GrpoError> {
    let mut token_groups = Vec::with_capacity(groups.len());
    for group in groups {
        let prompt = assemble_prompt(&group.instance);
        let mut trajectories = Vec::with_capacity(group.rollouts.len());
        for (rollout, advantage) in group.rollouts.iter().zip(&group.advantages) {
            let mut parts = Vec::with_capacity(rollout.parts.len());
            let mut old_logprobs = Vec::new();
            let mut loss_mask = Vec::new();
            let mut context = prompt.clone();
            for part in &rollout.parts {
                let injected = part.is_injected();
                let text = part.text().to_string();
                let recorded = match part {
                    RolloutPart::Generated {
                        token_logprobs: Some(lps),
                        ..
                    } => Some(lps),
                    _ => None,
                };
                let token_count = policy_old.vocab().tokenize_strict(&text)?.len();
                match recorded {
                    Some(lps) if lps.len() == token_count => {
                        old_logprobs.extend(lps.iter().map(|(_, lp)| *lp));
                    }
                    _ => {
                        let (_, per_token) = policy_old.sequence_logprob(&context, &text)?;
                        old_logprobs.extend(per_token.iter().map(|(_, lp)| *lp));
                    }
                }
                let include = !(injected && cfg.mask_information_tokens);
                loss_mask.extend(std::iter::repeat_n(include, token_count));
                context.push_str(&text);
                parts.push((text, injected));
            }
            trajectories.push(TrajectoryTokens {
                prompt: prompt.clone(),
                parts,
                old_logprobs,
                loss_mask,
                advantage: *advantage,
            });
        }
        token_groups.push(TokenGroup { trajectories });
    }
    Ok(TokenBatch {
        groups: token_groups,
    })
}

fn new_logprobs(policy: &ToySoftmaxPolicy, traj: &TrajectoryTokens) -> Result<Vec<f64>, GrpoError> {
    let mut context = traj.prompt.clone();
    let mut out = Vec::with_capacity(traj.old_logprobs.len());
    for (text, _) in &traj.parts {
        let (_, per_token) = policy.sequence_logprob(&context, text)?;
        out.extend(per_token.iter().map(|(_, lp)| *lp));
        context.push_str(text);
    }
    if out.len() != traj.old_logprobs.len() {
        return Err(GrpoError::ShapeMismatch {
            expected: traj.old_logprobs.len(),
            actual: out.len(),
        });
    }
    Ok(out)
}

/// The clipped surrogate objective of the batch under `policy_new`.
pub fn objective(
    batch: &TokenBatch,
    policy_new: &ToySoftmaxPolicy,
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    Ok(evaluate(batch, policy_new, cfg, None)?.objective)
}

/// Objective plus analytic gradient and clip diagnostics in one pass.
pub fn objective_gradient(
    batch: &TokenBatch,
    policy: &ToySoftmaxPolicy,
    cfg: &GrpoConfig,
) -> Result<(f64, Vec<f64>, ClipStats), GrpoError> {
    let mut grad = vec![0.0; policy.param_count()];
    let stats = evaluate(batch, policy, cfg, Some(&mut grad))?;
    Ok((stats.objective, grad, stats.clip))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClipStats {
    pub tokens: usize,
    pub clipped_tokens: usize,
}

impl ClipStats {
    pub fn fraction(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.clipped_tokens as f64 / self.tokens as f64
        }
    }
}

struct Evaluation {
    objective: f64,
    clip: ClipStats,
}

/// Shared evaluation core. With a gradient buffer, accumulates
/// ∂J/∂θ: each unclipped token contributes Â·r·∇logπ, clipped tokens
/// contribute nothing (the clipped branch is constant in θ).
fn evaluate(
    batch: &TokenBatch,
    policy: &ToySoftmaxPolicy,
    cfg: &GrpoConfig,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<Evaluation, GrpoError> {
    let n_groups = batch.groups.len();
    let mut total = 0.0;
    let mut clip = ClipStats::default();

    for group in &batch.groups {
        let g = group.trajectories.len().max(1) as f64;
        let group_scale = 1.0 / (g * n_groups.max(1) as f64);
        for traj in &group.trajectories {
            let news = new_logprobs(policy, traj)?;
            if traj.loss_mask.len() != news.len() {
                return Err(GrpoError::ShapeMismatch {
                    expected: news.len(),
                    actual: traj.loss_mask.len(),
                });
            }
            // Per-token policy-gradient weights, fed to the analytic
            // softmax gradient afterwards.
            let mut token_weights = vec![0.0; news.len()];
            for (t, (&new_lp, &old_lp)) in news.iter().zip(&traj.old_logprobs).enumerate() {
                if !traj.loss_mask[t] {
                    continue;
                }
                let ratio = (new_lp - old_lp).exp();
                let unclipped = ratio * traj.advantage;
                let clipped = ratio.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * traj.advantage;
                let term = unclipped.min(clipped);
                total += group_scale * term;
                clip.tokens += 1;
                if term < unclipped {
                    clip.clipped_tokens += 1;
                } else {
                    token_weights[t] = group_scale * traj.advantage * ratio;
                }
            }
            if let Some(grad) = grad.as_deref_mut() {
                if token_weights.iter().any(|&w| w != 0.0) {
                    let mut context = traj.prompt.clone();
                    let mut offset = 0usize;
                    for (text, _) in &traj.parts {
                        let count = policy.vocab().tokenize_strict(text)?.len();
                        let weights = &token_weights[offset..offset + count];
                        if weights.iter().any(|&w| w != 0.0) {
                            let part_grad = policy.gradient(&[WeightedSequence {
                                context: &context,
                                continuation: text,
                                token_weights: weights,
                            }])?;
                            for (g_acc, g_part) in grad.iter_mut().zip(&part_grad) {
                                *g_acc += g_part;
                            }
                        }
                        context.push_str(text);
                        offset += count;
                    }
                }
            }
        }
    }
    Ok(Evaluation {
        objective: total,
        clip,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainStepStats {
    /// Objective value before the update.
    pub objective: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

/// One gradient-ascent step on the clipped objective. Plain ascent, no
/// momentum: the toy policy is meant to validate the objective, and extra
/// optimizer state would confound that.
pub fn train_step(
    policy: &mut ToySoftmaxPolicy,
    batch: &TokenBatch,
    cfg: &GrpoConfig,
) -> Result<TrainStepStats, GrpoError> {
    let (objective, grad, clip) = objective_gradient(batch, policy, cfg)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    for (w, g) in policy.weights_mut().iter_mut().zip(&grad) {
        *w += cfg.learning_rate * g;
    }
    Ok(TrainStepStats {
        objective,
        grad_norm,
        clip_fraction: clip.fraction(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Central-difference comparison of `analytic` against the numeric gradient
/// of the objective, on `coords` sampled coordinates.
///
/// The per-coordinate denominator is floored at a few hundredths of the
/// gradient's largest magnitude: coordinates near zero are held to an
/// absolute tolerance instead of a relative one, since central differences
/// of a sum of hundreds of terms cannot resolve them below the roundoff of
/// the objective itself. A wrong gradient still fails loudly (the negative
/// control corrupts one coordinate by 1.0 and is caught through the floor).
pub fn compare_gradient_fd(
    policy: &mut ToySoftmaxPolicy,
    batch: &TokenBatch,
    cfg: &GrpoConfig,
    analytic: &[f64],
    h: f64,
    coords: usize,
    seed: u64,
) -> Result<FdReport, GrpoError> {
    assert!(
        (1e-8..=1e-4).contains(&h),
        "step size out of supported range"
    );
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = (3e-2 * scale).max(1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_error = 0.0f64;
    for _ in 0..coords {
        let ix = rng.random_range(0..policy.param_count());
        let original = policy.weights()[ix];
        policy.weights_mut()[ix] = original + h;
        let plus = objective(batch, policy, cfg)?;
        policy.weights_mut()[ix] = original - h;
        let minus = objective(batch, policy, cfg)?;
        policy.weights_mut()[ix] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[ix].abs().max(numeric.abs()).max(floor);
        max_rel_error = max_rel_error.max((analytic[ix] - numeric).abs() / denom);
    }
    Ok(FdReport {
        max_rel_error,
        coords_checked: coords,
    })
}

/// Verifies the analytic gradient on an on-policy batch: computes the
/// analytic gradient once and compares `coords` random coordinates against
/// central differences.
pub fn finite_difference_check(
    policy: &mut ToySoftmaxPolicy,
    batch: &TokenBatch,
    cfg: &GrpoConfig,
    h: f64,
    coords: usize,
    seed: u64,
) -> Result<FdReport, GrpoError> {
    let (_, analytic, _) = objective_gradient(batch, policy, cfg)?;
    compare_gradient_fd(policy, batch, cfg, &analytic, h, coords, seed)
}

/// Self-contained gradient verification: rolls out a small on-policy batch
/// on the bundled synthetic task, assigns alternating nonzero advantages
/// (the check is about the gradient, not the reward), and compares 120
/// coordinates against central differences with h = 1e-6.
pub fn self_check(seed: u64) -> Result<FdReport, GrpoError> {
    use crate::retrieval::{build_index, RetrievalBackend};
    use crate::rollout::{rollout_group, RolloutOptions};

    let task_cfg = crate::synthetic::SyntheticTaskConfig {
        pool_size: 4,
        holdout_size: 1,
        corpus_size: 20,
        seed,
        ..Default::default()
    };
    let task = crate::synthetic::generate(&task_cfg);
    let retriever = RetrievalBackend::Lexical(
        build_index(task.corpus.clone()).expect("synthetic corpus is non-empty"),
    );
    let mut policy = ToySoftmaxPolicy::seeded_for_verification(
        64,
        crate::util::derive_seed(seed, "fd-policy", &[]),
    );
    // Short episodes keep the objective small enough that central
    // differences stay well clear of accumulation roundoff.
    let mut options = RolloutOptions {
        seed: crate::util::derive_seed(seed, "fd-rollout", &[]),
        ..Default::default()
    };
    options.limits.max_turns = 1;
    options.limits.max_new_tokens_per_turn = 16;

    let groups: Vec<RolloutGroup> = task.pool[..2]
        .iter()
        .map(|ins| rollout_group(&policy, &retriever, ins, 2, &options))
        .collect();
    let cfg = GrpoConfig::toy();
    let mut batch = build_token_batch(&policy, &groups, &cfg)?;
    let advantages = [0.8, -0.5, 0.35, -0.65];
    let mut ix = 0;
    for group in &mut batch.groups {
        for traj in &mut group.trajectories {
            traj.advantage = advantages[ix % advantages.len()];
            ix += 1;
        }
    }
    finite_difference_check(&mut policy, &batch, &cfg, 1e-6, 120, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg() -> GrpoConfig {
        GrpoConfig::toy()
    }

    #[test]
    fn advantages_by_hand() {
        assert_eq!(
            group_advantages(&[1.0, 0.0, 1.0, 0.0]).unwrap(),
            vec![0.5, -0.5, 0.5, -0.5]
        );
        assert_eq!(
            group_advantages(&[1.0, 1.0, 1.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(group_advantages(&[1.0, 0.25]).unwrap(), vec![0.375, -0.375]);
        assert!(matches!(
            group_advantages(&[1.0]),
            Err(GrpoError::DegenerateGroup(1))
        ));
    }

    #[test]
    fn advantages_sum_to_zero_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let g = rng.random_range(2..=16);
            let rewards: Vec<f64> = (0..g)
                .map(|_| [0.0, 0.25, 1.0][rng.random_range(0..3)])
                .collect();
            let adv = group_advantages(&rewards).unwrap();
            assert!(adv.iter().sum::<f64>().abs() < 1e-12);
            let shifted: Vec<f64> = rewards.iter().map(|r| r + 0.625).collect();
            let adv_shifted = group_advantages(&shifted).unwrap();
            for (a, b) in adv.iter().zip(&adv_shifted) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipped_term_cases() {
        let cfg = toy_cfg();
        assert_eq!(clipped_term(1.0, 0.5, &cfg), 0.5);
        assert!((clipped_term(1.5, 1.0, &cfg) - 1.3).abs() < 1e-15);
        assert!((clipped_term(0.5, -1.0, &cfg) - (-0.8)).abs() < 1e-15);
        // Clipping never flatters a positive-advantage token.
        assert!(clipped_term(1.9, 0.7, &cfg) <= 1.9 * 0.7);
    }

    /// Builds a hand-crafted batch that forces exact importance ratios by
    /// back-solving the old log-probabilities.
    fn ratio_fixture(policy: &ToySoftmaxPolicy, entries: &[(&str, Vec<f64>, f64)]) -> TokenBatch {
        let prompt = "claim 14 .".to_string();
        let mut trajectories = Vec::new();
        for (text, ratios, advantage) in entries {
            let (_, per_token) = policy.sequence_logprob(&prompt, text).unwrap();
            assert_eq!(per_token.len(), ratios.len(), "fixture tokenization drift");
            let old_logprobs: Vec<f64> = per_token
                .iter()
                .zip(ratios)
                .map(|((_, new_lp), r)| new_lp - r.ln())
                .collect();
            trajectories.push(TrajectoryTokens {
                prompt: prompt.clone(),
                parts: vec![(text.to_string(), false)],
                old_logprobs,
                loss_mask: vec![true; ratios.len()],
                advantage: *advantage,
            });
        }
        TokenBatch {
            groups: vec![TokenGroup { trajectories }],
        }
    }

    #[test]
    fn objective_matches_hand_computation() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 17);
        // Two trajectories, two tokens each, ratios {1.0, 1.5} and {0.5, 1.0},
        // advantages +1 and −1, ε = (0.2, 0.3):
        //   traj 1: min(1.0, 1.0) + min(1.5, 1.3)   = 1.0 + 1.3
        //   traj 2: min(-0.5, -0.8) + min(-1, -1)   = -0.8 - 1.0
        //   J = (1/2)(2.3 - 1.8) = 0.25
        let batch = ratio_fixture(
            &policy,
            &[
                ("check1", vec![1.0, 1.5], 1.0),
                ("check0", vec![0.5, 1.0], -1.0),
            ],
        );
        let j = objective(&batch, &policy, &toy_cfg()).unwrap();
        assert!((j - 0.25).abs() < 1e-12, "objective {j}");
    }

    #[test]
    fn identical_policies_reduce_to_token_counts() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 23);
        let prompt = "claim 14 .".to_string();
        let texts = ["check1", "check check0", "check"];
        let advantages = [0.5, -0.25, -0.25];
        let mut trajectories = Vec::new();
        for (text, adv) in texts.iter().zip(advantages) {
            let (_, per_token) = policy.sequence_logprob(&prompt, text).unwrap();
            trajectories.push(TrajectoryTokens {
                prompt: prompt.clone(),
                parts: vec![(text.to_string(), false)],
                old_logprobs: per_token.iter().map(|(_, lp)| *lp).collect(),
                loss_mask: vec![true; per_token.len()],
                advantage: adv,
            });
        }
        let counts: Vec<f64> = trajectories
            .iter()
            .map(|t| t.unmasked_tokens() as f64)
            .collect();
        let batch = TokenBatch {
            groups: vec![TokenGroup { trajectories }],
        };
        let expected = counts
            .iter()
            .zip(advantages)
            .map(|(c, a)| c * a)
            .sum::<f64>()
            / 3.0;
        let j = objective(&batch, &policy, &toy_cfg()).unwrap();
        assert!((j - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_batch_is_inert() {
        let mut policy = ToySoftmaxPolicy::seeded_for_verification(128, 29);
        let batch = ratio_fixture(&policy, &[("check1", vec![1.0, 1.0], 0.0)]);
        assert_eq!(objective(&batch, &policy, &toy_cfg()).unwrap(), 0.0);
        let before = policy.weights().to_vec();
        let stats = train_step(&mut policy, &batch, &toy_cfg()).unwrap();
        assert_eq!(stats.objective, 0.0);
        assert_eq!(stats.grad_norm, 0.0);
        assert_eq!(policy.weights(), before.as_slice());
    }

    #[test]
    fn positive_advantage_step_raises_logprob() {
        let mut policy = ToySoftmaxPolicy::seeded_for_verification(128, 31);
        let prompt = "claim 14 .";
        let continuation = "<think>check</think><answer>1</answer>";
        let (before_lp, per_token) = policy.sequence_logprob(prompt, continuation).unwrap();
        let batch = TokenBatch {
            groups: vec![TokenGroup {
                trajectories: vec![TrajectoryTokens {
                    prompt: prompt.to_string(),
                    parts: vec![(continuation.to_string(), false)],
                    old_logprobs: per_token.iter().map(|(_, lp)| *lp).collect(),
                    loss_mask: vec![true; per_token.len()],
                    advantage: 1.0,
                }],
            }],
        };
        let cfg = GrpoConfig {
            learning_rate: 1e-3,
            ..GrpoConfig::toy()
        };
        train_step(&mut policy, &batch, &cfg).unwrap();
        let (after_lp, _) = policy.sequence_logprob(prompt, continuation).unwrap();
        assert!(after_lp > before_lp, "{after_lp} !> {before_lp}");
    }

    #[test]
    fn masking_only_affects_injected_tokens() {
        let policy = ToySoftmaxPolicy::seeded_for_verification(128, 37);
        let prompt = "claim 14 .".to_string();
        let make_batch = |mask_info: bool| {
            let parts = vec![
                ("<think>check</think>".to_string(), false),
                (
                    "\n<information>No results found.</information>\n".to_string(),
                    true,
                ),
                ("<answer>1</answer>".to_string(), false),
            ];
            let mut old_logprobs = Vec::new();
            let mut loss_mask = Vec::new();
            let mut ctx = prompt.clone();
            for (text, injected) in &parts {
                let (_, per) = policy.sequence_logprob(&ctx, text).unwrap();
                old_logprobs.extend(per.iter().map(|(_, lp)| *lp));
                loss_mask.extend(std::iter::repeat_n(!(*injected && mask_info), per.len()));
                ctx.push_str(text);
            }
            TokenBatch {
                groups: vec![TokenGroup {
                    trajectories: vec![TrajectoryTokens {
                        prompt: prompt.clone(),
                        parts: parts.clone(),
                        old_logprobs,
                        loss_mask,
                        advantage: 0.75,
                    }],
                }],
            }
        };
        let cfg_masked = GrpoConfig {
            mask_information_tokens: true,
            ..toy_cfg()
        };
        let cfg_unmasked = GrpoConfig {
            mask_information_tokens: false,
            ..toy_cfg()
        };
        let masked = objective(&make_batch(true), &policy, &cfg_masked).unwrap();
        let unmasked = objective(&make_batch(false), &policy, &cfg_unmasked).unwrap();
        // On-policy ratios are 1, so the delta is exactly the advantage times
        // the injected token count.
        let injected_tokens = policy
            .vocab()
            .tokenize_strict("\n<information>No results found.</information>\n")
            .unwrap()
            .len() as f64;
        assert!((unmasked - masked - 0.75 * injected_tokens).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_agreement() {
        let mut policy = ToySoftmaxPolicy::seeded_for_verification(64, 41);
        let batch = ratio_fixture(
            &policy,
            &[
                ("<think>check</think><answer>1</answer>", vec![1.0; 6], 0.6),
                ("<think>check</think><answer>0</answer>", vec![1.0; 6], -0.6),
            ],
        );
        let report =
            finite_difference_check(&mut policy, &batch, &toy_cfg(), 1e-6, 120, 7).unwrap();
        assert!(
            report.max_rel_error <= 1e-5,
            "max rel err {}",
            report.max_rel_error
        );
    }

    #[test]
    fn corrupted_gradient_fails_the_check() {
        let mut policy = ToySoftmaxPolicy::seeded_for_verification(64, 43);
        let batch = ratio_fixture(&policy, &[("check1", vec![1.0, 1.0], 1.0)]);
        let cfg = toy_cfg();
        let (_, mut analytic, _) = objective_gradient(&batch, &policy, &cfg).unwrap();
        // Corrupt a coordinate that the comparison will sample.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ix = rng.random_range(0..policy.param_count());
        analytic[ix] += 1.0;
        let report =
            compare_gradient_fd(&mut policy, &batch, &cfg, &analytic, 1e-6, 200, 11).unwrap();
        assert!(report.max_rel_error > 1e-2, "corruption went undetected");
    }

    #[test]
    fn repeated_steps_are_mostly_monotone() {
        let mut monotone = 0;
        for seed in 0..100 {
            let mut policy = ToySoftmaxPolicy::seeded_for_verification(64, seed);
            let batch = ratio_fixture(
                &policy,
                &[
                    ("<think>check</think><answer>1</answer>", vec![1.0; 6], 0.5),
                    ("<think>check</think><answer>0</answer>", vec![1.0; 6], -0.5),
                ],
            );
            let cfg = GrpoConfig {
                learning_rate: 5e-3,
                ..GrpoConfig::toy()
            };
            let mut last = f64::NEG_INFINITY;
            let mut ok = true;
            for _ in 0..10 {
                let stats = train_step(&mut policy, &batch, &cfg).unwrap();
                if stats.objective < last - 1e-12 {
                    ok = false;
                    break;
                }
                last = stats.objective;
            }
            if ok {
                monotone += 1;
            }
        }
        assert!(monotone >= 95, "only {monotone}/100 seeds were monotone");
    }
}
