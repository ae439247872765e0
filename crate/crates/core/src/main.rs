//! Thin command-line front end over the library.
//!
//! Usage errors exit 2 (clap's default); runtime failures exit 1 with a
//! structured JSON error line on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use veriseek::harness::{self, IterationDriver, RunConfig};
use veriseek::policy::toy::ToySoftmaxPolicy;
use veriseek::retrieval;
use veriseek::rollout::{rollout_groups_parallel, RolloutRecord};
use veriseek::synthetic::{self, SyntheticTaskConfig};
use veriseek::test_time_search::{self, BenchmarkQuestion, EvalReport, SelectionStrategy};
use veriseek::util::{derive_seed, fnv1a, read_jsonl, write_jsonl};

#[derive(Parser)]
#[command(
    name = "veriseek",
    version,
    about = "Search-augmented reasoning-trace verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a lexical search index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Grouped verification rollouts with rewards.
    #[command(subcommand)]
    Rollout(RolloutCommand),
    /// Curriculum filtering by reward variance.
    #[command(subcommand)]
    Curriculum(CurriculumCommand),
    /// Iterative training of the toy verifier.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Test-time search evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Policy-objective verification utilities.
    #[command(subcommand)]
    Grpo(GrpoCommand),
    /// Bundled synthetic task management.
    #[command(subcommand)]
    Task(TaskCommand),
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build an index from a JSONL corpus and persist it.
    Build(IndexBuildArgs),
}

#[derive(Args)]
struct IndexBuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum RolloutCommand {
    /// Run grouped rollouts over a pool and write JSONL records.
    Run(RolloutRunArgs),
}

#[derive(Args)]
struct RolloutRunArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional trained-policy checkpoint; defaults to a fresh seeded policy.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CurriculumCommand {
    /// Run the variance filter only and write the curriculum manifest.
    Filter(CurriculumFilterArgs),
}

#[derive(Args)]
struct CurriculumFilterArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TrainCommand {
    /// Run the full iterative loop from a config file.
    Iterate(TrainIterateArgs),
}

#[derive(Args)]
struct TrainIterateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Evaluate selection strategies over a benchmark.
    Search(EvalSearchArgs),
}

#[derive(Args)]
struct EvalSearchArgs {
    #[arg(long)]
    benchmark: PathBuf,
    /// best_of_n | hard_weighted_sc | soft_weighted_sc | plain_sc | all
    #[arg(long, default_value = "hard_weighted_sc")]
    strategy: String,
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Simulated generator trace accuracy.
    #[arg(long, default_value_t = 0.55)]
    generator_accuracy: f64,
    /// Simulated verifier judgment accuracy.
    #[arg(long, default_value_t = 0.8)]
    verifier_accuracy: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the scaling-curve CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GrpoCommand {
    /// Finite-difference verification of the policy gradient.
    Check(GrpoCheckArgs),
}

#[derive(Args)]
struct GrpoCheckArgs {
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Number of base seeds to sweep.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Subcommand)]
enum TaskCommand {
    /// Write the bundled synthetic task (pool, holdout, corpus, benchmark,
    /// run config) into a directory.
    Generate(TaskGenerateArgs),
}

#[derive(Args)]
struct TaskGenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pool_size: usize,
    #[arg(long, default_value_t = 100)]
    holdout_size: usize,
    #[arg(long, default_value_t = 200)]
    corpus_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn load_policy(
    config: &RunConfig,
    checkpoint: &Option<PathBuf>,
) -> anyhow::Result<ToySoftmaxPolicy> {
    match checkpoint {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(ToySoftmaxPolicy::seeded_for_verification(
            config.policy.feature_dim,
            derive_seed(config.seed, "policy-init", &[]),
        )),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Index(IndexCommand::Build(args)) => {
            let docs: Vec<retrieval::Document> = read_jsonl(&args.corpus)?;
            let index = retrieval::build_index(docs)?;
            std::fs::create_dir_all(&args.out)?;
            let path = args.out.join("index.json");
            std::fs::write(&path, serde_json::to_string(&index)?)?;
            println!(
                "indexed {} documents (avg length {:.2}) -> {}",
                index.doc_count(),
                index.avg_doc_length(),
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Rollout(RolloutCommand::Run(args)) => {
            let config = harness::load_config(&args.config)?;
            let pool = veriseek::rollout::load_instances(&args.pool)?;
            let retriever = config.build_retriever()?;
            let policy = load_policy(&config, &args.checkpoint)?;
            let options = config.rollout_options(derive_seed(config.seed, "cli-rollout", &[]));
            let groups = rollout_groups_parallel(
                &policy,
                &retriever,
                &pool,
                config.curriculum.group_size,
                &options,
                config.workers,
            );
            let hash = config.config_hash();
            let records: Vec<RolloutRecord> = groups
                .iter()
                .flat_map(|g| RolloutRecord::from_group(g, &hash, config.seed))
                .collect();
            write_jsonl(&args.out, &records)?;
            let mean: f64 =
                records.iter().map(|r| r.reward.total).sum::<f64>() / records.len().max(1) as f64;
            println!(
                "wrote {} rollouts for {} instances (mean reward {:.4}) -> {}",
                records.len(),
                groups.len(),
                mean,
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Curriculum(CurriculumCommand::Filter(args)) => {
            let config = harness::load_config(&args.config)?;
            let pool = veriseek::rollout::load_instances(&args.pool)?;
            let retriever = config.build_retriever()?;
            let policy = load_policy(&config, &args.checkpoint)?;
            let seed = derive_seed(config.seed, "cli-filter", &[]);
            let options = config.rollout_options(seed);
            let outcome = veriseek::curriculum::build_curriculum(
                &pool,
                &policy,
                &retriever,
                &config.curriculum,
                &options,
                seed,
                config.workers,
            );
            let manifest = veriseek::curriculum::CurriculumManifest {
                iteration: 0,
                seed,
                config: config.curriculum,
                config_hash: config.config_hash(),
                retained_instance_ids: outcome.retained_instance_ids(),
                stats: outcome.stats.clone(),
            };
            std::fs::write(&args.out, serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "examined {} instances, retained {} ({} all-correct, {} all-wrong) -> {}",
                outcome.stats.examined,
                outcome.stats.retained,
                outcome.stats.all_correct,
                outcome.stats.all_wrong,
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Train(TrainCommand::Iterate(args)) => {
            let config = harness::load_config(&args.config)?;
            let mut driver = IterationDriver::new(config)?;
            let already = driver.records().len();
            if already == 0 {
                println!(
                    "baseline holdout accuracy: {:.4}",
                    driver.baseline_accuracy()
                );
            } else {
                println!("resuming after iteration {already}");
            }
            let records = driver.run(None)?;
            for record in &records {
                println!(
                    "iteration {}: retained {}/{} (all-correct {}), steps {}, \
                     eval accuracy {:.4} [{:.1}s]",
                    record.iteration,
                    record.curriculum_stats.retained,
                    record.curriculum_stats.examined,
                    record.curriculum_stats.all_correct,
                    record.training.steps,
                    record.eval_accuracy,
                    record.wall_clock_secs,
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Eval(EvalCommand::Search(args)) => {
            let strategy_label = if args.strategy == "all" {
                "all".to_string()
            } else {
                args.strategy
                    .parse::<SelectionStrategy>()
                    .map_err(|e| anyhow::anyhow!(e))?
                    .as_str()
                    .to_string()
            };
            let questions: Vec<BenchmarkQuestion> = read_jsonl(&args.benchmark)?;
            let provider = synthetic::simulated_candidate_provider(
                args.generator_accuracy,
                args.verifier_accuracy,
                args.seed,
            );
            let (accuracy, curve, skipped) =
                test_time_search::evaluate_with(&questions, args.n, provider);
            let params_hash = format!(
                "{:016x}",
                fnv1a(
                    json!({
                        "n": args.n,
                        "p": args.generator_accuracy,
                        "q": args.verifier_accuracy,
                        "strategy": strategy_label,
                    })
                    .to_string()
                    .as_bytes()
                )
            );
            let report = EvalReport {
                n: args.n,
                questions: questions.len(),
                skipped,
                strategy_accuracy: accuracy,
                curve: curve.clone(),
                config_hash: params_hash,
                seed: args.seed,
            };
            if let Some(path) = &args.report {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            if let Some(path) = &args.csv {
                std::fs::write(path, test_time_search::curve_to_csv(&curve))?;
            }
            for (name, acc) in &report.strategy_accuracy {
                if strategy_label == "all" || *name == strategy_label {
                    println!("{name}: {acc:.4} (n = {})", args.n);
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Grpo(GrpoCommand::Check(args)) => {
            let mut worst = 0.0f64;
            for i in 0..args.seeds {
                let report =
                    veriseek::grpo::self_check(derive_seed(args.seed, "check", &[i as u64]))?;
                println!(
                    "seed {}: max relative error {:.3e} over {} coordinates",
                    i, report.max_rel_error, report.coords_checked
                );
                worst = worst.max(report.max_rel_error);
            }
            if worst <= 1e-5 {
                println!("gradient check passed (worst {worst:.3e} <= 1e-5)");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "{}",
                    json!({ "error": format!("gradient check failed: {worst:e}") })
                );
                Ok(ExitCode::from(1))
            }
        }

        Command::Task(TaskCommand::Generate(args)) => {
            let task_config = SyntheticTaskConfig {
                pool_size: args.pool_size,
                holdout_size: args.holdout_size,
                corpus_size: args.corpus_size,
                seed: args.seed,
                ..SyntheticTaskConfig::default()
            };
            harness::write_synthetic_task(&args.out, &task_config)?;
            println!(
                "wrote pool ({}), holdout ({}), corpus ({}), benchmark, run.toml -> {}",
                args.pool_size,
                args.holdout_size,
                args.corpus_size,
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
