//! Verifier-guided selection over N candidate generator traces.
//!
//! Four strategies over the same candidate set:
//!
//! - best-of-N: the answer of the highest-confidence candidate;
//! - hard-weighted self-consistency: majority vote among candidates the
//!   verifier judged correct (falling back to a plain vote when nothing
//!   was verified);
//! - soft-weighted self-consistency: votes weighted by confidence;
//! - plain self-consistency: unweighted majority vote.
//!
//! Tie-breaks are fixed: equal confidences go to the lowest candidate
//! index, equal vote scores to the lexicographically smallest answer key.
//! Candidates with no extractable answer are dropped from voting but still
//! counted in reports.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no candidate has an extractable answer")]
    NoAnswerableCandidate,
}

/// One generator trace with the verifier's read on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub trace_text: String,
    pub extracted_answer: Option<String>,
    /// Binary verifier judgment, when one was produced.
    pub judgment: Option<u8>,
    /// Confidence the trace is correct, in [0, 1].
    pub confidence: f64,
}

impl Candidate {
    pub fn is_verified(&self) -> bool {
        self.judgment == Some(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionStrategy {
    BestOfN,
    HardWeightedSc,
    SoftWeightedSc,
    PlainSc,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 4] = [
        SelectionStrategy::BestOfN,
        SelectionStrategy::HardWeightedSc,
        SelectionStrategy::SoftWeightedSc,
        SelectionStrategy::PlainSc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionStrategy::BestOfN => "best_of_n",
            SelectionStrategy::HardWeightedSc => "hard_weighted_sc",
            SelectionStrategy::SoftWeightedSc => "soft_weighted_sc",
            SelectionStrategy::PlainSc => "plain_sc",
        }
    }
}

impl std::str::FromStr for SelectionStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best_of_n" => Ok(SelectionStrategy::BestOfN),
            "hard_weighted_sc" => Ok(SelectionStrategy::HardWeightedSc),
            "soft_weighted_sc" => Ok(SelectionStrategy::SoftWeightedSc),
            "plain_sc" => Ok(SelectionStrategy::PlainSc),
            other => Err(format!(
                "unknown strategy {other:?}; expected one of best_of_n, hard_weighted_sc, \
                 soft_weighted_sc, plain_sc"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregationResult {
    pub chosen_answer: String,
    pub strategy: SelectionStrategy,
    pub per_answer_scores: BTreeMap<String, f64>,
    pub n_candidates: usize,
    pub n_verified: usize,
}

/// Pulls the option key out of the last "The answer is (X)" occurrence,
/// case-insensitively. Later matches override earlier ones.
pub fn extract_answer(trace_text: &str) -> Option<String> {
    let haystack: Vec<u8> = trace_text.bytes().map(|b| b.to_ascii_lowercase()).collect();
    let needle = b"the answer is (";
    let mut found = None;
    let mut from = 0usize;
    while from + needle.len() + 1 < haystack.len() + 1 {
        match haystack[from..]
            .windows(needle.len())
            .position(|w| w == needle)
        {
            Some(rel) => {
                let letter_ix = from + rel + needle.len();
                if letter_ix + 1 < haystack.len()
                    && haystack[letter_ix].is_ascii_alphabetic()
                    && haystack[letter_ix + 1] == b')'
                {
                    found = Some(
                        (haystack[letter_ix] as char)
                            .to_ascii_uppercase()
                            .to_string(),
                    );
                }
                from = from + rel + 1;
            }
            None => break,
        }
    }
    found
}

fn answerable(candidates: &[Candidate]) -> Vec<(usize, &Candidate, &str)> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(ix, c)| c.extracted_answer.as_deref().map(|a| (ix, c, a)))
        .collect()
}

fn count_verified(candidates: &[Candidate]) -> usize {
    candidates.iter().filter(|c| c.is_verified()).count()
}

/// Picks the maximum score; ties go to the lexicographically smallest key
/// (BTreeMap iteration order).
fn argmax_answer(scores: &BTreeMap<String, f64>) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for (key, &score) in scores {
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((key, score));
        }
    }
    best.map(|(k, _)| k.clone())
}

/// The answer of the argmax-confidence candidate; confidence ties go to the
/// lowest candidate index.
pub fn best_of_n(candidates: &[Candidate]) -> Result<AggregationResult, SelectionError> {
    let pool = answerable(candidates);
    let mut scores = BTreeMap::new();
    for (_, c, answer) in &pool {
        let entry = scores
            .entry((*answer).to_string())
            .or_insert(f64::NEG_INFINITY);
        if c.confidence > *entry {
            *entry = c.confidence;
        }
    }
    let mut best: Option<(usize, &Candidate, &str)> = None;
    for (ix, c, answer) in pool {
        let replace = match best {
            None => true,
            Some((_, b, _)) => c.confidence > b.confidence,
        };
        if replace {
            best = Some((ix, c, answer));
        }
    }
    let (_, _, answer) = best.ok_or(SelectionError::NoAnswerableCandidate)?;
    Ok(AggregationResult {
        chosen_answer: answer.to_string(),
        strategy: SelectionStrategy::BestOfN,
        per_answer_scores: scores,
        n_candidates: candidates.len(),
        n_verified: count_verified(candidates),
    })
}

fn vote(
    pool: &[(usize, &Candidate, &str)],
    weight: impl Fn(&Candidate) -> f64,
) -> BTreeMap<String, f64> {
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for (_, c, answer) in pool {
        *scores.entry((*answer).to_string()).or_insert(0.0) += weight(c);
    }
    scores
}

/// Majority vote restricted to verified candidates; falls back to a plain
/// vote over all answerable candidates when none is verified.
pub fn hard_weighted_sc(candidates: &[Candidate]) -> Result<AggregationResult, SelectionError> {
    let pool = answerable(candidates);
    if pool.is_empty() {
        return Err(SelectionError::NoAnswerableCandidate);
    }
    let verified: Vec<_> = pool
        .iter()
        .filter(|(_, c, _)| c.is_verified())
        .cloned()
        .collect();
    let scores = if verified.is_empty() {
        vote(&pool, |_| 1.0)
    } else {
        vote(&verified, |_| 1.0)
    };
    Ok(AggregationResult {
        chosen_answer: argmax_answer(&scores).expect("pool is non-empty"),
        strategy: SelectionStrategy::HardWeightedSc,
        per_answer_scores: scores,
        n_candidates: candidates.len(),
        n_verified: count_verified(candidates),
    })
}

/// Votes weighted by verifier confidence.
pub fn soft_weighted_sc(candidates: &[Candidate]) -> Result<AggregationResult, SelectionError> {
    let pool = answerable(candidates);
    if pool.is_empty() {
        return Err(SelectionError::NoAnswerableCandidate);
    }
    let scores = vote(&pool, |c| c.confidence);
    Ok(AggregationResult {
        chosen_answer: argmax_answer(&scores).expect("pool is non-empty"),
        strategy: SelectionStrategy::SoftWeightedSc,
        per_answer_scores: scores,
        n_candidates: candidates.len(),
        n_verified: count_verified(candidates),
    })
}

/// Unweighted majority vote over extracted answers.
pub fn plain_self_consistency(
    candidates: &[Candidate],
) -> Result<AggregationResult, SelectionError> {
    let pool = answerable(candidates);
    if pool.is_empty() {
        return Err(SelectionError::NoAnswerableCandidate);
    }
    let scores = vote(&pool, |_| 1.0);
    Ok(AggregationResult {
        chosen_answer: argmax_answer(&scores).expect("pool is non-empty"),
        strategy: SelectionStrategy::PlainSc,
        per_answer_scores: scores,
        n_candidates: candidates.len(),
        n_verified: count_verified(candidates),
    })
}

pub fn aggregate(
    strategy: SelectionStrategy,
    candidates: &[Candidate],
) -> Result<AggregationResult, SelectionError> {
    match strategy {
        SelectionStrategy::BestOfN => best_of_n(candidates),
        SelectionStrategy::HardWeightedSc => hard_weighted_sc(candidates),
        SelectionStrategy::SoftWeightedSc => soft_weighted_sc(candidates),
        SelectionStrategy::PlainSc => plain_self_consistency(candidates),
    }
}

/// One benchmark question (`eval search` input schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub question_id: String,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub gold_key: String,
}

/// Generator/verifier simulation used for calibration and trend checks.
///
/// Each question gets a gold key and one "attractive distractor"; wrong
/// traces concentrate on the distractor, which is what makes verification
/// filtering genuinely informative at scale.
#[derive(Debug, Clone, Copy)]
pub struct SimulationParams {
    /// Probability a sampled trace reaches the gold answer.
    pub generator_accuracy: f64,
    /// Probability the simulated verifier's judgment matches the trace.
    pub verifier_accuracy: f64,
    /// Probability a wrong trace lands on the shared distractor.
    pub distractor_mass: f64,
    pub n_options: usize,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            generator_accuracy: 0.55,
            verifier_accuracy: 0.8,
            distractor_mass: 0.8,
            n_options: 5,
        }
    }
}

fn option_keys(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| ((b'A' + i as u8) as char).to_string())
        .collect()
}

/// Simulates one question: returns the gold key and `n` candidates.
pub fn simulate_question(
    params: &SimulationParams,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (String, Vec<Candidate>) {
    let keys = option_keys(params.n_options);
    let gold_ix = rng.random_range(0..keys.len());
    let mut distractor_ix = rng.random_range(0..keys.len() - 1);
    if distractor_ix >= gold_ix {
        distractor_ix += 1;
    }
    let mut candidates = Vec::with_capacity(n);
    for _ in 0..n {
        let correct = rng.random_bool(params.generator_accuracy);
        let answer_ix = if correct {
            gold_ix
        } else if rng.random_bool(params.distractor_mass) {
            distractor_ix
        } else {
            // Uniform over the remaining wrong keys.
            let mut ix = rng.random_range(0..keys.len() - 1);
            if ix >= gold_ix {
                ix += 1;
            }
            ix
        };
        let judged_correct = if rng.random_bool(params.verifier_accuracy) {
            correct
        } else {
            !correct
        };
        let judgment = Some(u8::from(judged_correct));
        let confidence = if judged_correct {
            0.5 + 0.5 * rng.random::<f64>()
        } else {
            0.5 * rng.random::<f64>()
        };
        candidates.push(Candidate {
            trace_text: format!("simulated trace. The answer is ({}).", keys[answer_ix]),
            extracted_answer: Some(keys[answer_ix].clone()),
            judgment,
            confidence,
        });
    }
    (keys[gold_ix].clone(), candidates)
}

/// Accuracy of each strategy at one sampling budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub accuracy: BTreeMap<String, f64>,
}

/// The standard budget ladder reported by scaling runs.
pub const BUDGET_LADDER: [usize; 6] = [1, 2, 4, 8, 16, 32];

/// Monte-Carlo scaling curves over simulated questions. Candidates are
/// shared across budgets (each budget takes a prefix), pairing the
/// strategy comparisons.
pub fn simulated_scaling_curve(
    params: &SimulationParams,
    n_questions: usize,
    max_n: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    use rand::SeedableRng;
    let budgets: Vec<usize> = BUDGET_LADDER
        .iter()
        .copied()
        .filter(|&b| b <= max_n)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct: BTreeMap<(usize, &'static str), usize> = BTreeMap::new();
    for _ in 0..n_questions {
        let (gold, candidates) = simulate_question(params, max_n, &mut rng);
        for &budget in &budgets {
            let prefix = &candidates[..budget];
            for strategy in SelectionStrategy::ALL {
                if let Ok(result) = aggregate(strategy, prefix) {
                    if result.chosen_answer == gold {
                        *correct.entry((budget, strategy.as_str())).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    budgets
        .iter()
        .map(|&n| {
            let mut accuracy = BTreeMap::new();
            for strategy in SelectionStrategy::ALL {
                let hits = correct.get(&(n, strategy.as_str())).copied().unwrap_or(0);
                accuracy.insert(
                    strategy.as_str().to_string(),
                    hits as f64 / n_questions as f64,
                );
            }
            CurvePoint { n, accuracy }
        })
        .collect()
}

/// Full evaluation report (`eval search` output schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub questions: usize,
    pub skipped: usize,
    pub strategy_accuracy: BTreeMap<String, f64>,
    pub curve: Vec<CurvePoint>,
    pub config_hash: String,
    pub seed: u64,
}

/// Evaluates the strategies against real candidates from `provider`.
/// Provider failures skip the question (with a count in the report) rather
/// than aborting the run.
pub fn evaluate_with(
    questions: &[BenchmarkQuestion],
    n: usize,
    mut provider: impl FnMut(&BenchmarkQuestion, usize) -> Result<Candidate, PolicyError>,
) -> (BTreeMap<String, f64>, Vec<CurvePoint>, usize) {
    let budgets: Vec<usize> = BUDGET_LADDER.iter().copied().filter(|&b| b <= n).collect();
    let mut correct: BTreeMap<(usize, &'static str), usize> = BTreeMap::new();
    let mut scored_questions = 0usize;
    let mut skipped = 0usize;

    'questions: for question in questions {
        let mut candidates = Vec::with_capacity(n);
        for ix in 0..n {
            match provider(question, ix) {
                Ok(candidate) => candidates.push(candidate),
                Err(_) => {
                    skipped += 1;
                    continue 'questions;
                }
            }
        }
        scored_questions += 1;
        for &budget in &budgets {
            let prefix = &candidates[..budget];
            for strategy in SelectionStrategy::ALL {
                if let Ok(result) = aggregate(strategy, prefix) {
                    if result.chosen_answer == question.gold_key {
                        *correct.entry((budget, strategy.as_str())).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    let curve: Vec<CurvePoint> = budgets
        .iter()
        .map(|&budget| {
            let mut accuracy = BTreeMap::new();
            for strategy in SelectionStrategy::ALL {
                let hits = correct
                    .get(&(budget, strategy.as_str()))
                    .copied()
                    .unwrap_or(0);
                accuracy.insert(
                    strategy.as_str().to_string(),
                    if scored_questions == 0 {
                        0.0
                    } else {
                        hits as f64 / scored_questions as f64
                    },
                );
            }
            CurvePoint {
                n: budget,
                accuracy,
            }
        })
        .collect();
    let final_accuracy = curve.last().map(|p| p.accuracy.clone()).unwrap_or_default();
    (final_accuracy, curve, skipped)
}

/// CSV rendering of a scaling curve, one row per budget.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("n,best_of_n,hard_weighted_sc,soft_weighted_sc,plain_sc\n");
    for point in curve {
        let get = |k: &str| point.accuracy.get(k).copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            point.n,
            get("best_of_n"),
            get("hard_weighted_sc"),
            get("soft_weighted_sc"),
            get("plain_sc"),
        ));
    }
    out
}
