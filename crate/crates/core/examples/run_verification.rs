//! One multi-turn verification episode with a scripted policy.
//!
//! The policy thinks, searches once, reads the retrieved information, and
//! judges the trace; the engine executes the search and splices the
//! results in between.
//!
//! Run with: cargo run --example run_verification

use veriseek::policy::mock::MockPolicy;
use veriseek::retrieval::{build_index, RetrievalBackend};
use veriseek::reward::total_reward;
use veriseek::rollout::{assemble_prompt, run_verification, RolloutOptions};
use veriseek::samples;

fn main() {
    let instance = samples::clinical_instance();
    let retriever =
        RetrievalBackend::Lexical(build_index(samples::mini_corpus()).expect("valid corpus"));

    let policy = MockPolicy::sequence([
        "<think>\nThe trace blames taxanes for the ototoxicity. Bladder cancer is usually \
         treated with cisplatin, so that attribution needs checking.\n</think>\n\
         <search>cisplatin ototoxicity</search>",
        "<think>\nThe retrieved card confirms cisplatin causes sensorineural hearing loss and \
         acts by cross-linking DNA, so the trace's conclusion (B) is wrong.\n</think>\n\
         <answer>0</answer>",
    ]);

    let prompt = assemble_prompt(&instance);
    println!(
        "prompt tail:\n...{}\n",
        &prompt[prompt.len().saturating_sub(300)..]
    );

    let rollout = run_verification(
        &policy,
        &retriever,
        &instance,
        &RolloutOptions::default(),
        0,
    );
    println!("trajectory:\n{}\n", rollout.trajectory.raw_text);
    println!("retrieval calls: {}", rollout.retrieval_calls);
    println!("events: {:?}", rollout.events);
    println!(
        "reward vs gold {}: {:?}",
        instance.gold_label,
        total_reward(&rollout.trajectory, instance.gold_label)
    );
}
