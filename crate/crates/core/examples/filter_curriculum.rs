//! Curriculum filtering by within-group reward variance.
//!
//! A coin-flip judge retains almost everything (any mixed group survives);
//! an oracle judge retains nothing (every group is all-correct). The
//! retention rate of the coin-flip judge matches 1 − 2·(1/2)^G.
//!
//! Run with: cargo run --example filter_curriculum

use veriseek::curriculum::{build_curriculum, CurriculumConfig};
use veriseek::policy::mock::{JudgmentLookupPolicy, RandomJudgmentPolicy};
use veriseek::retrieval::{build_index, RetrievalBackend};
use veriseek::rollout::RolloutOptions;
use veriseek::synthetic::{generate, SyntheticTaskConfig};

fn main() {
    let task = generate(&SyntheticTaskConfig {
        pool_size: 1000,
        ..Default::default()
    });
    let retriever =
        RetrievalBackend::Lexical(build_index(task.corpus.clone()).expect("valid corpus"));
    let config = CurriculumConfig {
        budget: 1000,
        group_size: 8,
        ..Default::default()
    };
    let options = RolloutOptions::default();

    let coin_flip = RandomJudgmentPolicy { p_one: 0.5 };
    let outcome = build_curriculum(&task.pool, &coin_flip, &retriever, &config, &options, 7, 4);
    let rate = outcome.stats.retained as f64 / outcome.stats.examined as f64;
    let expected = 1.0 - 2.0 * 0.5f64.powi(config.group_size as i32);
    println!(
        "coin-flip judge: examined {}, retained {} (rate {:.4}, theory {:.4})",
        outcome.stats.examined, outcome.stats.retained, rate, expected
    );
    println!("  stats: {:?}", outcome.stats);

    let oracle = JudgmentLookupPolicy::oracle(&task.pool);
    let outcome = build_curriculum(&task.pool, &oracle, &retriever, &config, &options, 7, 4);
    println!(
        "\noracle judge: examined {}, retained {}, all-correct {}",
        outcome.stats.examined, outcome.stats.retained, outcome.stats.all_correct
    );
}
