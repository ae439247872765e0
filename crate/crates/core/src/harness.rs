//! Run configuration, the iterative training driver, and persistence.
//!
//! One iteration is: build a curriculum from fresh balanced samples, train
//! the toy policy on the retained rollout groups for a few epochs, then
//! score held-out verification accuracy with greedy decoding. Iterations
//! persist as they complete — records, a policy checkpoint, the curriculum
//! manifest, and per-step metrics — so a killed run resumes from the last
//! finished iteration and reproduces the same records.
//!
//! Wall-clock timings live in a separate `timings.jsonl`; the canonical
//! `records.json` contains only deterministic fields, which is what makes
//! "same seed, same records" testable byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{build_curriculum, CurriculumConfig, CurriculumManifest, CurriculumStats};
use crate::grpo::{build_token_batch, train_step, GrpoConfig, GrpoError, TokenBatch};
use crate::policy::toy::ToySoftmaxPolicy;
use crate::policy::PolicyBackend;
use crate::protocol::extract_judgment;
use crate::retrieval::{build_index, RemoteSearchConfig, RetrievalBackend, RetrievalError};
use crate::rollout::{
    load_instances, run_verification, RolloutGroup, RolloutLimits, RolloutOptions,
    VerificationInstance,
};
use crate::util::{derive_seed, fnv1a};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("resume mismatch: checkpoint was written by config {found}, current is {expected}")]
    ResumeMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub pool: PathBuf,
    pub corpus: PathBuf,
    pub holdout: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            pool: PathBuf::from("pool.jsonl"),
            corpus: PathBuf::from("corpus.jsonl"),
            holdout: PathBuf::from("holdout.jsonl"),
            output_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub max_turns: usize,
    pub max_new_tokens_per_turn: usize,
    pub max_context_chars: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for RolloutSection {
    fn default() -> Self {
        RolloutSection {
            max_turns: 10,
            max_new_tokens_per_turn: 48,
            max_context_chars: 6000,
            temperature: 1.0,
            top_p: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// "lexical" or "remote".
    pub backend: String,
    pub k: usize,
    pub max_snippet_chars: usize,
    pub endpoint: Option<String>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            backend: "lexical".into(),
            k: crate::retrieval::DEFAULT_TOP_K,
            max_snippet_chars: 1000,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// Only "toy" is trainable; remote backends are evaluation-only.
    pub backend: String,
    pub feature_dim: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            backend: "toy".into(),
            feature_dim: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// T_max.
    pub max_iterations: usize,
    /// Rollout groups per optimization step.
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
    pub paths: PathsConfig,
    pub curriculum: CurriculumConfig,
    pub grpo: GrpoConfig,
    pub rollout: RolloutSection,
    pub retrieval: RetrievalSection,
    pub policy: PolicySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        // Desk-scale training profile. The toy policy reuses each
        // iteration's curriculum rollouts for every epoch, so one iteration
        // must carry far more optimization steps than a setup that redraws
        // rollouts per batch; the higher learning rate and epoch count (and
        // the wider feature space, which keeps hashed judgment features
        // clear of high-traffic collisions) are calibrated to that.
        RunConfig {
            max_iterations: 2,
            batch_size: 32,
            seed: 17,
            workers: 4,
            paths: PathsConfig::default(),
            curriculum: CurriculumConfig::default(),
            grpo: GrpoConfig {
                learning_rate: 1.0,
                epochs_per_iteration: 30,
                ..GrpoConfig::default()
            },
            rollout: RolloutSection::default(),
            retrieval: RetrievalSection::default(),
            policy: PolicySection {
                feature_dim: 2048,
                ..PolicySection::default()
            },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.max_iterations == 0 {
            return Err(HarnessError::Config(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        self.curriculum.validate().map_err(HarnessError::Config)?;
        self.grpo.validate().map_err(HarnessError::Config)?;
        if self.policy.backend != "toy" {
            return Err(HarnessError::Config(format!(
                "training requires the toy policy backend; {:?} is evaluation-only",
                self.policy.backend
            )));
        }
        match self.retrieval.backend.as_str() {
            "lexical" => {}
            "remote" if self.retrieval.endpoint.is_some() => {}
            "remote" => {
                return Err(HarnessError::Config(
                    "retrieval.backend = \"remote\" requires retrieval.endpoint".into(),
                ))
            }
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown retrieval backend {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Stable fingerprint of every semantically relevant setting; embedded
    /// in all output artifacts. File locations and worker counts are
    /// excluded: results are deterministic regardless of either, so moving
    /// a run or changing parallelism must not break resume.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
            map.remove("workers");
        }
        format!("{:016x}", fnv1a(value.to_string().as_bytes()))
    }

    pub fn rollout_options(&self, seed: u64) -> RolloutOptions {
        RolloutOptions {
            limits: RolloutLimits {
                max_turns: self.rollout.max_turns,
                max_new_tokens_per_turn: self.rollout.max_new_tokens_per_turn,
                max_context_chars: self.rollout.max_context_chars,
            },
            temperature: self.rollout.temperature,
            top_p: self.rollout.top_p,
            retrieval_k: self.retrieval.k,
            max_snippet_chars: self.retrieval.max_snippet_chars,
            seed,
        }
    }

    pub fn build_retriever(&self) -> Result<RetrievalBackend, HarnessError> {
        match self.retrieval.backend.as_str() {
            "remote" => Ok(RetrievalBackend::Remote(RemoteSearchConfig {
                endpoint: self
                    .retrieval
                    .endpoint
                    .clone()
                    .ok_or_else(|| HarnessError::Config("missing retrieval.endpoint".into()))?,
                timeout_secs: 30,
            })),
            _ => {
                let docs: Vec<crate::retrieval::Document> =
                    crate::util::read_jsonl(&self.paths.corpus)?;
                Ok(RetrievalBackend::Lexical(build_index(docs)?))
            }
        }
    }
}

/// Loads a TOML run configuration; relative paths resolve against the
/// config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut config: RunConfig =
        toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = path.parent() {
        for p in [
            &mut config.paths.pool,
            &mut config.paths.corpus,
            &mut config.paths.holdout,
            &mut config.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        }
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub first_objective: f64,
    pub last_objective: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub curriculum_stats: CurriculumStats,
    pub training: TrainingSummary,
    pub eval_accuracy: f64,
    pub config_hash: String,
    pub seed: u64,
    /// Measured, not part of the deterministic record identity.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// One line of `metrics_iter_<t>.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetric {
    pub iteration: usize,
    pub step: usize,
    pub objective: f64,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Greedy held-out verification accuracy: fraction of instances whose
/// final judgment equals the gold label (non-terminal episodes count as
/// wrong).
pub fn eval_holdout_accuracy(
    policy: &dyn PolicyBackend,
    retriever: &RetrievalBackend,
    holdout: &[VerificationInstance],
    options: &RolloutOptions,
) -> f64 {
    if holdout.is_empty() {
        return 0.0;
    }
    let mut greedy = options.clone();
    greedy.temperature = 0.0;
    let hits = holdout
        .iter()
        .filter(|instance| {
            let rollout = run_verification(policy, retriever, instance, &greedy, 0);
            extract_judgment(&rollout.trajectory) == Some(instance.gold_label)
        })
        .count();
    hits as f64 / holdout.len() as f64
}

/// The iterative trainer. Owns the policy, data, and output directory.
pub struct IterationDriver {
    config: RunConfig,
    config_hash: String,
    pool: Vec<VerificationInstance>,
    holdout: Vec<VerificationInstance>,
    retriever: RetrievalBackend,
    policy: ToySoftmaxPolicy,
    records: Vec<IterationRecord>,
}

impl IterationDriver {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let config_hash = config.config_hash();
        let pool = load_instances(&config.paths.pool)?;
        if pool.is_empty() {
            return Err(HarnessError::Config("instance pool is empty".into()));
        }
        let holdout = load_instances(&config.paths.holdout)?;
        let retriever = config.build_retriever()?;
        fs::create_dir_all(&config.paths.output_dir)?;

        let records = Self::load_records(&config, &config_hash)?;
        let policy = match records.last() {
            Some(record) => {
                let checkpoint = config
                    .paths
                    .output_dir
                    .join(format!("policy_iter_{}.json", record.iteration));
                let text = fs::read_to_string(checkpoint)?;
                serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Config(format!("bad checkpoint: {e}")))?
            }
            None => ToySoftmaxPolicy::seeded_for_verification(
                config.policy.feature_dim,
                derive_seed(config.seed, "policy-init", &[]),
            ),
        };
        Ok(IterationDriver {
            config,
            config_hash,
            pool,
            holdout,
            retriever,
            policy,
            records,
        })
    }

    fn load_records(
        config: &RunConfig,
        config_hash: &str,
    ) -> Result<Vec<IterationRecord>, HarnessError> {
        let path = config.paths.output_dir.join("records.json");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path)?;
        let records: Vec<IterationRecord> = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("bad records file: {e}")))?;
        if let Some(record) = records.first() {
            if record.config_hash != config_hash {
                return Err(HarnessError::ResumeMismatch {
                    expected: config_hash.to_string(),
                    found: record.config_hash.clone(),
                });
            }
        }
        Ok(records)
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn policy(&self) -> &ToySoftmaxPolicy {
        &self.policy
    }

    pub fn baseline_accuracy(&self) -> f64 {
        let options = self
            .config
            .rollout_options(derive_seed(self.config.seed, "eval", &[0]));
        eval_holdout_accuracy(&self.policy, &self.retriever, &self.holdout, &options)
    }

    /// Runs iterations until `max_iterations` (or `stop_after` total
    /// completed iterations, when given — the kill-and-resume hook).
    pub fn run(&mut self, stop_after: Option<usize>) -> Result<Vec<IterationRecord>, HarnessError> {
        while self.records.len() < self.config.max_iterations {
            if stop_after.is_some_and(|s| self.records.len() >= s) {
                break;
            }
            let iteration = self.records.len() + 1;
            let record = self.run_iteration(iteration)?;
            self.persist_iteration(&record)?;
            self.records.push(record);
        }
        Ok(self.records.clone())
    }

    fn run_iteration(&mut self, iteration: usize) -> Result<IterationRecord, HarnessError> {
        let started = Instant::now();
        let iter_seed = derive_seed(self.config.seed, "iteration", &[iteration as u64]);
        let options = self.config.rollout_options(iter_seed);

        let outcome = build_curriculum(
            &self.pool,
            &self.policy,
            &self.retriever,
            &self.config.curriculum,
            &options,
            iter_seed,
            self.config.workers,
        );

        let manifest = CurriculumManifest {
            iteration,
            seed: iter_seed,
            config: self.config.curriculum,
            config_hash: self.config_hash.clone(),
            retained_instance_ids: outcome.retained_instance_ids(),
            stats: outcome.stats.clone(),
        };
        self.write_json(&format!("curriculum_iter_{iteration}.json"), &manifest)?;

        let mut metrics: Vec<TrainMetric> = Vec::new();
        let mut training = TrainingSummary {
            steps: 0,
            first_objective: 0.0,
            last_objective: 0.0,
            mean_reward: 0.0,
        };

        if !outcome.groups.is_empty() {
            let chunks: Vec<&[RolloutGroup]> =
                outcome.groups.chunks(self.config.batch_size).collect();
            let chunk_rewards: Vec<f64> = chunks
                .iter()
                .map(|chunk| {
                    let total: f64 = chunk.iter().flat_map(|g| g.reward_values()).sum();
                    let count: usize = chunk.iter().map(|g| g.rollouts.len()).sum();
                    total / count.max(1) as f64
                })
                .collect();
            let total_reward: f64 = outcome.groups.iter().flat_map(|g| g.reward_values()).sum();
            let total_rollouts: usize = outcome.groups.iter().map(|g| g.rollouts.len()).sum();
            training.mean_reward = total_reward / total_rollouts.max(1) as f64;

            // The curriculum rollouts are reused across all epochs (they are
            // sampled once per instance per iteration), but the importance
            // anchor is refreshed each epoch: reference training re-anchors
            // on every fresh rollout batch, and without the refresh the
            // clip's trust region caps the whole iteration's movement at
            // one epoch's worth.
            let mut step = 0usize;
            for _epoch in 0..self.config.grpo.epochs_per_iteration {
                let mut batches: Vec<TokenBatch> = Vec::with_capacity(chunks.len());
                for chunk in &chunks {
                    batches.push(build_token_batch(&self.policy, chunk, &self.config.grpo)?);
                }
                for (batch, mean_reward) in batches.iter().zip(&chunk_rewards) {
                    let stats = train_step(&mut self.policy, batch, &self.config.grpo)?;
                    if step == 0 {
                        training.first_objective = stats.objective;
                    }
                    training.last_objective = stats.objective;
                    metrics.push(TrainMetric {
                        iteration,
                        step,
                        objective: stats.objective,
                        mean_reward: *mean_reward,
                        clip_fraction: stats.clip_fraction,
                        grad_norm: stats.grad_norm,
                    });
                    step += 1;
                }
            }
            training.steps = step;
        }

        crate::util::write_jsonl(
            &self
                .config
                .paths
                .output_dir
                .join(format!("metrics_iter_{iteration}.jsonl")),
            &metrics,
        )?;

        let eval_options =
            self.config
                .rollout_options(derive_seed(self.config.seed, "eval", &[iteration as u64]));
        let eval_accuracy =
            eval_holdout_accuracy(&self.policy, &self.retriever, &self.holdout, &eval_options);

        Ok(IterationRecord {
            iteration,
            curriculum_stats: outcome.stats,
            training,
            eval_accuracy,
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), HarnessError> {
        let path = self.config.paths.output_dir.join(name);
        let text =
            serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    fn persist_iteration(&self, record: &IterationRecord) -> Result<(), HarnessError> {
        let checkpoint =
            serde_json::to_string(&self.policy).map_err(|e| HarnessError::Config(e.to_string()))?;
        fs::write(
            self.config
                .paths
                .output_dir
                .join(format!("policy_iter_{}.json", record.iteration)),
            checkpoint,
        )?;

        let mut all = self.records.clone();
        all.push(record.clone());
        self.write_json("records.json", &all)?;

        // Timings are observational; they live outside the record identity.
        let timing = serde_json::json!({
            "iteration": record.iteration,
            "wall_clock_secs": record.wall_clock_secs,
        });
        let timings_path = self.config.paths.output_dir.join("timings.jsonl");
        let mut line = timing.to_string();
        line.push('\n');
        use std::io::Write;
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(timings_path)?
            .write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Loads, runs, and returns the records for a config file.
pub fn run_iterations(
    config: RunConfig,
    stop_after: Option<usize>,
) -> Result<Vec<IterationRecord>, HarnessError> {
    IterationDriver::new(config)?.run(stop_after)
}

/// Writes the bundled synthetic task (pool, holdout, corpus, benchmark,
/// and a ready-to-run config) into `dir`.
pub fn write_synthetic_task(
    dir: &Path,
    task_config: &crate::synthetic::SyntheticTaskConfig,
) -> Result<RunConfig, HarnessError> {
    fs::create_dir_all(dir)?;
    let task = crate::synthetic::generate(task_config);
    crate::util::write_jsonl(&dir.join("pool.jsonl"), &task.pool)?;
    crate::util::write_jsonl(&dir.join("holdout.jsonl"), &task.holdout)?;
    crate::util::write_jsonl(&dir.join("corpus.jsonl"), &task.corpus)?;
    let benchmark = crate::synthetic::generate_benchmark(200, task_config);
    crate::util::write_jsonl(&dir.join("benchmark.jsonl"), &benchmark)?;

    let config = RunConfig {
        paths: PathsConfig {
            pool: dir.join("pool.jsonl"),
            corpus: dir.join("corpus.jsonl"),
            holdout: dir.join("holdout.jsonl"),
            output_dir: dir.join("runs"),
        },
        seed: task_config.seed,
        ..RunConfig::default()
    };
    let toml_text =
        toml::to_string_pretty(&config).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(dir.join("run.toml"), toml_text)?;
    Ok(config)
}
