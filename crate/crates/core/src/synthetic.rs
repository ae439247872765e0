//! Bundled synthetic verification task.
//!
//! Claims are doubling facts ("q plus q equals c"); erroneous traces plant
//! an off-by-one result, so a correct claim always ends in an even value
//! and a planted error in an odd one. The corpus holds one fact card per
//! value, which makes retrieval genuinely informative (searching the
//! claim's digits surfaces the right card), and an oracle labeler exists by
//! construction. Everything is emitted from the toy policy's vocabulary so
//! trajectories over this task tokenize exactly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::policy::PolicyError;
use crate::retrieval::Document;
use crate::rollout::VerificationInstance;
use crate::test_time_search::{BenchmarkQuestion, Candidate};
use crate::util::{derive_seed, fnv1a};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    pub pool_size: usize,
    pub holdout_size: usize,
    pub corpus_size: usize,
    /// Claim operands are drawn from [value_min, value_max]; keep
    /// 2·value_max below 100 so claimed sums stay two digits wide.
    pub value_min: u32,
    pub value_max: u32,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            pool_size: 500,
            holdout_size: 100,
            corpus_size: 200,
            value_min: 5,
            value_max: 49,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub pool: Vec<VerificationInstance>,
    pub holdout: Vec<VerificationInstance>,
    pub corpus: Vec<Document>,
}

fn make_instance(id: String, value: u32, label: u8) -> VerificationInstance {
    let truth = 2 * value;
    let claimed = if label == 1 { truth } else { truth + 1 };
    VerificationInstance {
        instance_id: id,
        question: format!("verify the claim that {value} plus {value} equals {claimed} ."),
        trace_steps: vec![
            format!("we must evaluate {value} plus {value} ."),
            format!("recall the fact card f{value} ."),
            format!("thus {value} plus {value} equals {claimed} ."),
        ],
        gold_label: label,
    }
}

fn make_split(
    prefix: &str,
    count: usize,
    config: &SyntheticTaskConfig,
    seed: u64,
) -> Vec<VerificationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances: Vec<VerificationInstance> = (0..count)
        .map(|i| {
            let value = rng.random_range(config.value_min..=config.value_max);
            // Alternating labels keep every split exactly balanced.
            make_instance(format!("{prefix}-{i}"), value, (i % 2) as u8)
        })
        .collect();
    instances.shuffle(&mut rng);
    instances
}

/// Generates the pool, holdout, and fact-card corpus.
pub fn generate(config: &SyntheticTaskConfig) -> SyntheticTask {
    let pool = make_split(
        "syn-pool",
        config.pool_size,
        config,
        derive_seed(config.seed, "pool", &[]),
    );
    let holdout = make_split(
        "syn-holdout",
        config.holdout_size,
        config,
        derive_seed(config.seed, "holdout", &[]),
    );
    let corpus = (0..config.corpus_size)
        .map(|i| {
            let value = config.value_min + i as u32;
            Document {
                id: format!("f{value}"),
                title: format!("fact f{value}"),
                text: format!("{value} plus {value} equals {} .", 2 * value),
            }
        })
        .collect();
    SyntheticTask {
        pool,
        holdout,
        corpus,
    }
}

/// Recomputes the trace-level label from the claim itself: the final step
/// asserts "a plus b equals c", which is error-free iff a + b = c.
pub fn oracle_label(instance: &VerificationInstance) -> Option<u8> {
    let step = instance.trace_steps.last()?;
    let numbers: Vec<u64> = step
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    match numbers.as_slice() {
        [a, b, c] => Some(u8::from(a + b == *c)),
        _ => None,
    }
}

/// Multiple-choice companion benchmark: the gold option is the true sum and
/// the neighboring values are distractors, with the off-by-one value
/// playing the "attractive distractor" that erroneous traces converge on.
pub fn generate_benchmark(count: usize, config: &SyntheticTaskConfig) -> Vec<BenchmarkQuestion> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "benchmark", &[]));
    (0..count)
        .map(|i| {
            let value = rng.random_range(config.value_min..=config.value_max);
            let truth = 2 * value;
            let mut values = vec![truth, truth + 1, truth - 1, truth + 2, truth - 2];
            values.shuffle(&mut rng);
            let keys = ["A", "B", "C", "D", "E"];
            let mut options = BTreeMap::new();
            let mut gold_key = String::new();
            for (key, v) in keys.iter().zip(&values) {
                options.insert(key.to_string(), v.to_string());
                if *v == truth {
                    gold_key = key.to_string();
                }
            }
            BenchmarkQuestion {
                question_id: format!("syn-bench-{i}"),
                question: format!("what is {value} plus {value} ?"),
                options,
                gold_key,
            }
        })
        .collect()
}

/// Candidate provider simulating a generator of accuracy `p` and a verifier
/// of judgment accuracy `q` over a benchmark question. Wrong answers
/// concentrate on the off-by-one option when it exists. Deterministic per
/// (seed, question, candidate index).
pub fn simulated_candidate_provider(
    generator_accuracy: f64,
    verifier_accuracy: f64,
    seed: u64,
) -> impl FnMut(&BenchmarkQuestion, usize) -> Result<Candidate, PolicyError> {
    move |question: &BenchmarkQuestion, ix: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            "sim-candidate",
            &[fnv1a(question.question_id.as_bytes()), ix as u64],
        ));
        let gold_value: i64 = question
            .options
            .get(&question.gold_key)
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        let distractor_key = question
            .options
            .iter()
            .find(|(_, v)| {
                v.parse::<i64>()
                    .map(|x| x == gold_value + 1)
                    .unwrap_or(false)
            })
            .map(|(k, _)| k.clone());

        let correct = rng.random_bool(generator_accuracy);
        let answer_key = if correct {
            question.gold_key.clone()
        } else if let Some(d) = distractor_key.filter(|_| rng.random_bool(0.8)) {
            d
        } else {
            let wrong: Vec<&String> = question
                .options
                .keys()
                .filter(|k| **k != question.gold_key)
                .collect();
            wrong[rng.random_range(0..wrong.len())].clone()
        };
        let judged_correct = if rng.random_bool(verifier_accuracy) {
            correct
        } else {
            !correct
        };
        let confidence = if judged_correct {
            0.5 + 0.5 * rng.random::<f64>()
        } else {
            0.5 * rng.random::<f64>()
        };
        Ok(Candidate {
            trace_text: format!("working the sum out. The answer is ({answer_key})."),
            extracted_answer: Some(answer_key),
            judgment: Some(u8::from(judged_correct)),
            confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::toy::ToyVocab;

    #[test]
    fn splits_are_balanced_and_sized() {
        let task = generate(&SyntheticTaskConfig::default());
        assert_eq!(task.pool.len(), 500);
        assert_eq!(task.holdout.len(), 100);
        assert_eq!(task.corpus.len(), 200);
        let pool_ones = task.pool.iter().filter(|i| i.gold_label == 1).count();
        assert_eq!(pool_ones, 250);
        let holdout_ones = task.holdout.iter().filter(|i| i.gold_label == 1).count();
        assert_eq!(holdout_ones, 50);
    }

    #[test]
    fn oracle_agrees_with_gold_everywhere() {
        let task = generate(&SyntheticTaskConfig::default());
        for instance in task.pool.iter().chain(&task.holdout) {
            assert_eq!(
                oracle_label(instance),
                Some(instance.gold_label),
                "{}",
                instance.instance_id
            );
        }
    }

    #[test]
    fn corpus_text_tokenizes_in_toy_vocabulary() {
        let vocab = ToyVocab::verification_default();
        let task = generate(&SyntheticTaskConfig::default());
        for doc in &task.corpus {
            vocab.tokenize_strict(&doc.text).unwrap();
            vocab.tokenize_strict(&doc.title).unwrap();
        }
    }

    #[test]
    fn claim_parity_separates_labels() {
        let task = generate(&SyntheticTaskConfig::default());
        for instance in &task.pool {
            let claimed: u32 = instance
                .trace_steps
                .last()
                .unwrap()
                .split(|c: char| !c.is_ascii_digit())
                .rfind(|s| !s.is_empty())
                .unwrap()
                .parse()
                .unwrap();
            assert_eq!(u8::from(claimed.is_multiple_of(2)), instance.gold_label);
            assert!((10..100).contains(&claimed), "claims stay two digits");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&SyntheticTaskConfig::default());
        let b = generate(&SyntheticTaskConfig::default());
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.corpus, b.corpus);
    }

    #[test]
    fn benchmark_gold_key_is_consistent() {
        let config = SyntheticTaskConfig::default();
        for q in generate_benchmark(50, &config) {
            let gold_value: u32 = q.options[&q.gold_key].parse().unwrap();
            assert_eq!(gold_value % 2, 0);
            assert_eq!(q.options.len(), 5);
        }
    }
}
