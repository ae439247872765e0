//! Structured reward for completed verification trajectories.
//!
//! Two components, multiplied:
//!
//! ```text
//! correctness  R_c ∈ {0, 1}       judgment matches the gold label
//! format       R_f ∈ {0, 0.25, 1} structural compliance, tag-overflow aware
//! total        R   = R_c × R_f
//! ```
//!
//! Everything here is total and deterministic: absent or garbled judgments
//! score zero rather than erroring, so rollouts never crash on bad output.

use serde::{Deserialize, Serialize};

use crate::protocol::{extract_judgment, validate_format, Trajectory};

/// Answer-tag budget: more pairs than this is scored as tag overflow.
pub const MAX_ANSWER_PAIRS: usize = 10;

/// Reward for a trajectory whose format is compliant but exceeds the
/// answer-tag budget.
pub const OVERFLOW_FORMAT_REWARD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub correctness: f64,
    pub format: f64,
    pub total: f64,
}

/// 1 iff the trajectory's final judgment exists and equals `gold`.
pub fn correctness_reward(trajectory: &Trajectory, gold: u8) -> f64 {
    debug_assert!(gold <= 1);
    match extract_judgment(trajectory) {
        Some(judgment) if judgment == gold => 1.0,
        _ => 0.0,
    }
}

/// 1 for a well-formed trajectory within the answer-tag budget, 0.25 for a
/// well-formed one over budget, 0 for anything with violations.
pub fn format_reward(trajectory: &Trajectory) -> f64 {
    let verdict = validate_format(trajectory);
    if !verdict.well_formed {
        0.0
    } else if verdict.answer_pair_count <= MAX_ANSWER_PAIRS {
        1.0
    } else {
        OVERFLOW_FORMAT_REWARD
    }
}

/// Full breakdown; `total` is exactly the product of the components.
pub fn total_reward(trajectory: &Trajectory, gold: u8) -> RewardBreakdown {
    let correctness = correctness_reward(trajectory, gold);
    let format = format_reward(trajectory);
    RewardBreakdown {
        correctness,
        format,
        total: correctness * format,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{parse, Segment, Trajectory};

    fn trace_with_answers(n: usize, judgment: &str) -> Trajectory {
        let mut segs = vec![Segment::think("t")];
        for _ in 0..n {
            segs.push(Segment::answer(judgment));
        }
        Trajectory::from_segments(segs)
    }

    #[test]
    fn correctness_matches_gold() {
        let zero = parse("<think>t</think><answer>0</answer>");
        assert_eq!(correctness_reward(&zero, 0), 1.0);
        let one = parse("<think>t</think><answer>1</answer>");
        assert_eq!(correctness_reward(&one, 0), 0.0);
        let none = parse("<think>t</think>");
        assert_eq!(correctness_reward(&none, 1), 0.0);
    }

    #[test]
    fn format_tiers() {
        assert_eq!(format_reward(&trace_with_answers(1, "1")), 1.0);
        assert_eq!(format_reward(&trace_with_answers(10, "1")), 1.0);
        assert_eq!(format_reward(&trace_with_answers(11, "1")), 0.25);
        let broken = parse("<think>a<answer>1</answer>");
        assert_eq!(format_reward(&broken), 0.0);
    }

    #[test]
    fn totals_are_products() {
        let clean = trace_with_answers(1, "1");
        assert_eq!(
            total_reward(&clean, 1),
            RewardBreakdown {
                correctness: 1.0,
                format: 1.0,
                total: 1.0
            }
        );
        let overflow = trace_with_answers(11, "1");
        assert_eq!(
            total_reward(&overflow, 1),
            RewardBreakdown {
                correctness: 1.0,
                format: 0.25,
                total: 0.25
            }
        );
        let wrong = trace_with_answers(1, "0");
        assert_eq!(
            total_reward(&wrong, 1),
            RewardBreakdown {
                correctness: 0.0,
                format: 1.0,
                total: 0.0
            }
        );
    }

    #[test]
    fn degrading_format_never_raises_total() {
        // Same judgment, increasingly broken format.
        let tiers = [
            total_reward(&trace_with_answers(1, "1"), 1).total,
            total_reward(&trace_with_answers(11, "1"), 1).total,
            total_reward(&parse("<think>a<answer>1</answer>"), 1).total,
        ];
        assert!(tiers.windows(2).all(|w| w[0] >= w[1]));
    }
}
