//! Adaptive curriculum construction by within-group reward variance.
//!
//! Instances where all G rollouts earn the same reward carry no policy
//! gradient (a group-mean advantage of zero everywhere), so they are
//! filtered out. Balanced batches of fresh candidates are drawn until the
//! budget is met or the pool runs dry; when retention skews the labels,
//! later rounds draw only the deficient label. Rollout groups produced
//! while filtering are returned for reuse as the training data — sampling
//! happens once per instance per iteration.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyBackend;
use crate::retrieval::RetrievalBackend;
use crate::rollout::{rollout_groups_parallel, RolloutGroup, RolloutOptions, VerificationInstance};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("a reward group needs at least two members, got {0}")]
    DegenerateGroup(usize),
    #[error(
        "balanced batch infeasible: need {need_ones} label-1 and {need_zeros} label-0, \
         pool has {available_ones} and {available_zeros}"
    )]
    BatchInfeasible {
        need_ones: usize,
        need_zeros: usize,
        available_ones: usize,
        available_zeros: usize,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    /// Number of retained instances to aim for.
    pub budget: usize,
    pub group_size: usize,
    pub balance_labels: bool,
    pub max_resample_rounds: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            budget: 200,
            group_size: 8,
            balance_labels: true,
            max_resample_rounds: 16,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("budget must be at least 1".into());
        }
        if self.group_size < 2 {
            return Err("group_size must be at least 2".into());
        }
        if self.max_resample_rounds == 0 {
            return Err("max_resample_rounds must be at least 1".into());
        }
        Ok(())
    }
}

/// How the examined instances broke down. The four outcome counts
/// partition `examined`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumStats {
    pub examined: usize,
    pub retained: usize,
    /// Zero-variance groups where every rollout earned the full reward.
    pub all_correct: usize,
    /// Zero-variance groups where every rollout earned zero.
    pub all_wrong: usize,
    /// Zero-variance groups at some intermediate reward value.
    pub degenerate_other: usize,
    /// Gold labels of the retained instances.
    pub label_histogram: BTreeMap<u8, usize>,
    /// Set when the pool or the resample rounds ran out before the budget.
    pub budget_unmet: bool,
}

/// True iff some pair of rewards differs. Rewards live on the exact grid
/// {0, 0.25, 1}, so direct comparison is safe.
pub fn has_learning_signal(rewards: &[f64]) -> Result<bool, CurriculumError> {
    if rewards.len() < 2 {
        return Err(CurriculumError::DegenerateGroup(rewards.len()));
    }
    Ok(rewards.iter().any(|r| *r != rewards[0]))
}

/// Draws ⌊B/2⌋ label-1 and ⌈B/2⌉ label-0 instances without replacement,
/// deterministically per seed.
pub fn sample_balanced_batch(
    pool: &[VerificationInstance],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<VerificationInstance>, CurriculumError> {
    let need_ones = batch_size / 2;
    let need_zeros = batch_size - need_ones;
    draw_by_label(pool, need_ones, need_zeros, seed)
}

fn draw_by_label(
    pool: &[VerificationInstance],
    need_ones: usize,
    need_zeros: usize,
    seed: u64,
) -> Result<Vec<VerificationInstance>, CurriculumError> {
    let mut ones: Vec<&VerificationInstance> = pool.iter().filter(|i| i.gold_label == 1).collect();
    let mut zeros: Vec<&VerificationInstance> = pool.iter().filter(|i| i.gold_label == 0).collect();
    if ones.len() < need_ones || zeros.len() < need_zeros {
        return Err(CurriculumError::BatchInfeasible {
            need_ones,
            need_zeros,
            available_ones: ones.len(),
            available_zeros: zeros.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ones.shuffle(&mut rng);
    zeros.shuffle(&mut rng);
    let mut batch: Vec<VerificationInstance> = ones
        .into_iter()
        .take(need_ones)
        .chain(zeros.into_iter().take(need_zeros))
        .cloned()
        .collect();
    batch.shuffle(&mut rng);
    Ok(batch)
}

/// The retained curriculum plus its rollout groups and statistics.
#[derive(Debug)]
pub struct CurriculumOutcome {
    /// Retained instances with the rollout groups that justified them,
    /// reused directly as RL training data.
    pub groups: Vec<RolloutGroup>,
    pub stats: CurriculumStats,
}

impl CurriculumOutcome {
    pub fn retained_instance_ids(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| g.instance.instance_id.clone())
            .collect()
    }
}

/// Runs the filtering loop: sample fresh candidates, roll out groups of
/// `G`, retain instances whose reward variance is non-zero, stop at the
/// budget. Exhausting the pool first is not fatal; the outcome's stats
/// carry `budget_unmet` instead.
pub fn build_curriculum(
    pool: &[VerificationInstance],
    policy: &dyn PolicyBackend,
    retriever: &RetrievalBackend,
    config: &CurriculumConfig,
    options: &RolloutOptions,
    seed: u64,
    workers: usize,
) -> CurriculumOutcome {
    let target_ones = config.budget / 2;
    let target_zeros = config.budget - target_ones;

    let mut used: HashSet<String> = HashSet::new();
    let mut groups: Vec<RolloutGroup> = Vec::new();
    let mut stats = CurriculumStats::default();
    let mut retained_ones = 0usize;
    let mut retained_zeros = 0usize;

    for round in 0..config.max_resample_rounds {
        if groups.len() >= config.budget {
            break;
        }
        let available: Vec<VerificationInstance> = pool
            .iter()
            .filter(|i| !used.contains(&i.instance_id))
            .cloned()
            .collect();

        let round_seed = derive_seed(seed, "curriculum-round", &[round as u64]);
        let candidates = if config.balance_labels {
            let need_ones = target_ones.saturating_sub(retained_ones);
            let need_zeros = target_zeros.saturating_sub(retained_zeros);
            let avail_ones = available.iter().filter(|i| i.gold_label == 1).count();
            let avail_zeros = available.len() - avail_ones;
            let draw_ones = need_ones.min(avail_ones);
            let draw_zeros = need_zeros.min(avail_zeros);
            if draw_ones + draw_zeros == 0 {
                break;
            }
            draw_by_label(&available, draw_ones, draw_zeros, round_seed)
                .expect("draw sized to availability")
        } else {
            let deficit = config.budget - groups.len();
            let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
            let mut shuffled = available;
            shuffled.shuffle(&mut rng);
            shuffled.truncate(deficit);
            if shuffled.is_empty() {
                break;
            }
            shuffled
        };

        for instance in &candidates {
            used.insert(instance.instance_id.clone());
        }

        let rolled = rollout_groups_parallel(
            policy,
            retriever,
            &candidates,
            config.group_size,
            options,
            workers,
        );
        for group in rolled {
            stats.examined += 1;
            let rewards = group.reward_values();
            let signal = has_learning_signal(&rewards).expect("group_size >= 2");
            if signal {
                if group.instance.gold_label == 1 {
                    retained_ones += 1;
                } else {
                    retained_zeros += 1;
                }
                stats.retained += 1;
                *stats
                    .label_histogram
                    .entry(group.instance.gold_label)
                    .or_insert(0) += 1;
                groups.push(group);
            } else if rewards.iter().all(|&r| r == 1.0) {
                stats.all_correct += 1;
            } else if rewards.iter().all(|&r| r == 0.0) {
                stats.all_wrong += 1;
            } else {
                stats.degenerate_other += 1;
            }
        }
    }

    stats.budget_unmet = groups.len() < config.budget;
    CurriculumOutcome { groups, stats }
}

/// Manifest persisted by the `curriculum filter` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub iteration: usize,
    pub seed: u64,
    pub config: CurriculumConfig,
    pub config_hash: String,
    pub retained_instance_ids: Vec<String>,
    pub stats: CurriculumStats,
}
