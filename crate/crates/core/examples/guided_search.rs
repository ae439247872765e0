//! Use a trained toy verifier to guide test-time answer selection.
//!
//! Trains the verifier on the bundled synthetic task (one iteration), then
//! evaluates a simulated generator on the companion multiple-choice
//! benchmark: each candidate trace is verified with a real multi-turn
//! rollout, the judgment confidence comes from the verifier's own logits,
//! and answers are aggregated per strategy.
//!
//! Run with: cargo run --example guided_search
//! (Expect a minute or so in a debug build.)

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use veriseek::harness::{write_synthetic_task, IterationDriver};
use veriseek::policy::judgment_confidence;
use veriseek::protocol::extract_judgment;
use veriseek::retrieval::{build_index, RetrievalBackend};
use veriseek::rollout::{assemble_prompt, run_verification, RolloutOptions, VerificationInstance};
use veriseek::synthetic::{generate, generate_benchmark, SyntheticTaskConfig};
use veriseek::test_time_search::{evaluate_with, BenchmarkQuestion, Candidate};
use veriseek::util::{derive_seed, fnv1a};

/// Samples a generator trace for one benchmark question: mostly correct,
/// with errors concentrated on the off-by-one option.
fn sample_trace(
    question: &BenchmarkQuestion,
    ix: usize,
    accuracy: f64,
    seed: u64,
) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "gen-trace",
        &[fnv1a(question.question_id.as_bytes()), ix as u64],
    ));
    let gold_value: i64 = question.options[&question.gold_key].parse().unwrap();
    let key = if rng.random_bool(accuracy) {
        question.gold_key.clone()
    } else {
        question
            .options
            .iter()
            .find(|(_, v)| v.parse::<i64>() == Ok(gold_value + 1))
            .map(|(k, _)| k.clone())
            .unwrap_or_else(|| question.gold_key.clone())
    };
    let value = &question.options[&key];
    let operand = gold_value / 2;
    let trace = format!(
        "we must evaluate {operand} plus {operand} . thus {operand} plus {operand} equals \
         {value} . The answer is ({key})."
    );
    (trace, key)
}

fn main() {
    // Train for one iteration.
    let dir = tempfile::tempdir().expect("temp dir");
    let task_config = SyntheticTaskConfig::default();
    let mut run_config =
        write_synthetic_task(dir.path(), &task_config).expect("task generation succeeds");
    run_config.max_iterations = 1;
    let mut driver = IterationDriver::new(run_config).expect("driver builds");
    let records = driver.run(None).expect("training runs");
    println!(
        "verifier holdout accuracy after training: {:.3}",
        records[0].eval_accuracy
    );

    let verifier = driver.policy().clone();
    let task = generate(&task_config);
    let retriever = RetrievalBackend::Lexical(build_index(task.corpus).expect("valid corpus"));
    let benchmark = generate_benchmark(60, &task_config);

    let greedy = RolloutOptions {
        temperature: 0.0,
        ..Default::default()
    };

    // Candidate provider: real verification rollout per generator trace.
    // The verifier reads the claim-bearing steps; the trailing answer
    // sentence is selection metadata and would only push the claim out of
    // the toy policy's short feature window.
    let provider = |question: &BenchmarkQuestion, ix: usize| {
        let (trace, _) = sample_trace(question, ix, 0.55, 23);
        let claim_steps: Vec<String> = trace
            .split(" . ")
            .filter(|s| !s.to_ascii_lowercase().contains("the answer is"))
            .map(|s| format!("{} .", s.trim_end_matches(" .")))
            .collect();
        let instance = VerificationInstance {
            instance_id: format!("{}-cand-{ix}", question.question_id),
            question: question.question.clone(),
            trace_steps: claim_steps,
            gold_label: 0, // unused during evaluation
        };
        let rollout = run_verification(&verifier, &retriever, &instance, &greedy, ix);
        let judgment = extract_judgment(&rollout.trajectory);

        // Confidence from the verifier's logits at the final answer slot.
        let confidence = rollout
            .trajectory
            .raw_text
            .rfind("<answer>")
            .and_then(|at| {
                let context = format!(
                    "{}{}",
                    assemble_prompt(&instance),
                    &rollout.trajectory.raw_text[..at + "<answer>".len()]
                );
                judgment_confidence(&verifier, &context).ok()
            })
            .unwrap_or_else(|| judgment.map(f64::from).unwrap_or(0.5));

        Ok(Candidate {
            extracted_answer: veriseek::test_time_search::extract_answer(&trace),
            trace_text: trace,
            judgment,
            confidence,
        })
    };

    let (accuracy, curve, skipped) = evaluate_with(&benchmark, 8, provider);
    println!("\nskipped questions: {skipped}");
    println!("accuracy at n = 8 over {} questions:", benchmark.len());
    for (strategy, acc) in &accuracy {
        println!("  {strategy:18} {acc:.3}");
    }
    println!("\nscaling curve:");
    for point in &curve {
        println!(
            "  n={:<2} plain {:.3} | hard {:.3}",
            point.n, point.accuracy["plain_sc"], point.accuracy["hard_weighted_sc"]
        );
    }
}
