//! Verifier-guided answer selection and its scaling behavior.
//!
//! Simulates a generator with 55% per-trace accuracy and a verifier with
//! 80% judgment accuracy, then compares the four selection strategies as
//! the sampling budget N grows.
//!
//! Run with: cargo run --example select_answers

use veriseek::test_time_search::{
    aggregate, simulate_question, simulated_scaling_curve, SelectionStrategy, SimulationParams,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = SimulationParams::default();

    // One simulated question up close.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (gold, candidates) = simulate_question(&params, 8, &mut rng);
    println!("gold key: {gold}");
    for (i, c) in candidates.iter().enumerate() {
        println!(
            "  candidate {i}: answer {:?}, judgment {:?}, confidence {:.3}",
            c.extracted_answer, c.judgment, c.confidence
        );
    }
    for strategy in SelectionStrategy::ALL {
        let result = aggregate(strategy, &candidates).expect("answerable candidates");
        println!(
            "  {:18} -> {} (verified {}/{})",
            strategy.as_str(),
            result.chosen_answer,
            result.n_verified,
            result.n_candidates
        );
    }

    // Accuracy versus sampling budget, Monte-Carlo over many questions.
    println!("\naccuracy by sampling budget (3000 questions):");
    println!("  n   best_of_n  hard_sc  soft_sc  plain_sc");
    for point in simulated_scaling_curve(&params, 3000, 32, 11) {
        println!(
            "  {:<3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            point.n,
            point.accuracy["best_of_n"],
            point.accuracy["hard_weighted_sc"],
            point.accuracy["soft_weighted_sc"],
            point.accuracy["plain_sc"],
        );
    }
}
