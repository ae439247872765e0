//! veriseek: search-augmented verification of reasoning traces.
//!
//! The crate trains and evaluates a *generative verifier*: a policy that
//! reads a question plus a multi-step reasoning trace, interleaves free-form
//! thinking with search-engine calls over a document corpus, and ends with a
//! binary judgment on whether the trace contains errors. Around that core
//! sit the pieces that make the loop trainable and useful:
//!
//! - [`protocol`] — the `<think>/<search>/<information>/<answer>` trajectory
//!   grammar: lossless parsing, rendering, validation;
//! - [`reward`] — the structured reward `R = R_correctness × R_format`;
//! - [`retrieval`] — a deterministic BM25 index with a pluggable remote
//!   backend, serving formatted top-k snippets;
//! - [`policy`] — interchangeable generation backends: scripted mocks, a
//!   trainable toy softmax policy, an OpenAI-compatible remote client;
//! - [`rollout`] — the multi-turn generate/search/append loop and grouped
//!   rollouts;
//! - [`curriculum`] — filtering to instances whose rollout groups show
//!   non-zero reward variance, with balanced resampling to a budget;
//! - [`grpo`] — group-mean advantages and the clipped token-level policy
//!   objective, finite-difference checked;
//! - [`test_time_search`] — best-of-N and (weighted) self-consistency
//!   selection over candidate generator traces;
//! - [`harness`] — configuration, the iterative train/filter/eval driver,
//!   and resumable persistence;
//! - [`synthetic`] — a bundled verification task where retrieval helps and
//!   an oracle labeler exists;
//! - [`stub`] — in-process chat-completion and search stubs for tests.
//!
//! Start with the runnable examples (`cargo run --example ...`): each major
//! capability has one.

pub mod curriculum;
pub mod grpo;
pub mod harness;
mod httpclient;
pub mod policy;
pub mod protocol;
pub mod retrieval;
pub mod reward;
pub mod rollout;
pub mod samples;
pub mod stub;
pub mod synthetic;
pub mod test_time_search;
pub mod util;

pub use curriculum::{build_curriculum, has_learning_signal, CurriculumConfig, CurriculumStats};
pub use grpo::{clipped_term, group_advantages, train_step, GrpoConfig, TokenBatch};
pub use policy::{judgment_confidence, GenerationRequest, GenerationResult, PolicyBackend};
pub use protocol::{extract_judgment, parse, parse_strict, render, validate_format, Trajectory};
pub use retrieval::{build_index, format_information, search, Document, SearchIndex};
pub use reward::{correctness_reward, format_reward, total_reward, RewardBreakdown};
pub use rollout::{assemble_prompt, rollout_group, run_verification, VerificationInstance};
pub use test_time_search::{
    best_of_n, hard_weighted_sc, plain_self_consistency, soft_weighted_sc, Candidate,
};
