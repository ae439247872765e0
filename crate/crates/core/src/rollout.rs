//! Multi-turn verification rollouts.
//!
//! One rollout alternates generation and tool execution: the policy
//! generates until it closes a `<search>` or `<answer>` tag; a closed
//! search triggers retrieval and the formatted results are appended as an
//! `<information>` block; a closed answer ends the episode. The trajectory
//! text grows strictly by concatenation, so the parsed trajectory renders
//! back to exactly the context suffix the policy saw.
//!
//! Failures never surface as errors here: backend or retrieval problems
//! degrade the rollout (empty information, truncated trajectory) and are
//! recorded in the per-rollout event log. A degraded trajectory simply
//! earns zero reward downstream.

use serde::{Deserialize, Serialize};

use crate::policy::{GenerationRequest, PolicyBackend, StopReason};
use crate::protocol::{parse, SegmentKind, Trajectory};
use crate::retrieval::{format_information, truncate_hits, RetrievalBackend};
use crate::reward::{total_reward, RewardBreakdown};
use crate::util::{derive_seed, fnv1a};

/// Prompt skeleton for one verification episode. The two placeholders are
/// substituted by [`assemble_prompt`].
pub const PROMPT_TEMPLATE: &str = "\
You are a reasoning validator for medical problems. Your task is to think step by step and \
evaluate whether the given reasoning trace of a medical problem contains errors.

First, you must always perform a step-by-step analysis to examine the entire reasoning \
process. Then, based on your analysis, you will make a definitive judgment.

- Use 1 if the reasoning trace is free of errors.

- Use 0 if the reasoning trace contains one or more errors.

Output Instruction:

You must conduct your step-by-step analysis inside <think> and </think> first every time you \
get new information. After reasoning, if you find you lack some knowledge, you can call a \
search engine by <search> query </search> and it will return the top searched results between \
<information> and </information>. You can search as many times as you want. If you find no \
further external knowledge needed, you can directly provide the answer inside <answer> and \
</answer>, without detailed illustrations.

Medical Problem:
{question}

Reasoning Trace:
{trace}
";

/// One labeled verification task: a question, the generator's multi-step
/// reasoning trace, and the trace-level gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationInstance {
    pub instance_id: String,
    pub question: String,
    pub trace_steps: Vec<String>,
    /// 1 = error-free trace, 0 = contains at least one error.
    pub gold_label: u8,
}

impl VerificationInstance {
    pub fn validate(&self) -> Result<(), String> {
        if self.trace_steps.is_empty() {
            return Err(format!(
                "instance {}: trace_steps is empty",
                self.instance_id
            ));
        }
        if self.gold_label > 1 {
            return Err(format!(
                "instance {}: gold_label must be 0 or 1, got {}",
                self.instance_id, self.gold_label
            ));
        }
        Ok(())
    }
}

/// Loads and validates instances from JSONL
/// (`{"instance_id", "question", "trace_steps", "gold_label"}` per line).
pub fn load_instances(path: &std::path::Path) -> std::io::Result<Vec<VerificationInstance>> {
    let instances: Vec<VerificationInstance> = crate::util::read_jsonl(path)?;
    for instance in &instances {
        instance
            .validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    }
    Ok(instances)
}

/// Hard bounds on a single rollout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutLimits {
    /// Maximum number of search executions.
    pub max_turns: usize,
    pub max_new_tokens_per_turn: usize,
    pub max_context_chars: usize,
}

impl Default for RolloutLimits {
    fn default() -> Self {
        RolloutLimits {
            max_turns: 10,
            max_new_tokens_per_turn: 256,
            max_context_chars: 24_000,
        }
    }
}

/// Everything a rollout needs besides the policy and retriever.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub limits: RolloutLimits,
    pub temperature: f64,
    pub top_p: f64,
    pub retrieval_k: usize,
    pub max_snippet_chars: usize,
    /// Base seed; per-call seeds derive from (instance, rollout, turn).
    pub seed: u64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            limits: RolloutLimits::default(),
            temperature: 1.0,
            top_p: 0.95,
            retrieval_k: crate::retrieval::DEFAULT_TOP_K,
            max_snippet_chars: 1000,
            seed: 0,
        }
    }
}

/// Notable degradations during a rollout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RolloutEvent {
    BackendFailed(String),
    RetrievalFailed(String),
    /// The search-execution cap was reached with another search pending.
    TurnLimitReached,
    ContextOverflow,
    /// Generation ended without closing a search or answer tag.
    UnterminatedGeneration,
    /// A `</search>` stop fired but no search segment could be extracted.
    MalformedSearch,
}

/// A contiguous span of trajectory text: either sampled from the policy
/// (with its recorded log-probabilities when the backend exposes them) or
/// injected by the environment (information blocks).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RolloutPart {
    Generated {
        text: String,
        token_logprobs: Option<Vec<(String, f64)>>,
    },
    Injected {
        text: String,
    },
}

impl RolloutPart {
    pub fn text(&self) -> &str {
        match self {
            RolloutPart::Generated { text, .. } | RolloutPart::Injected { text } => text,
        }
    }

    pub fn is_injected(&self) -> bool {
        matches!(self, RolloutPart::Injected { .. })
    }
}

/// One completed (possibly degraded) verification episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rollout {
    pub instance_id: String,
    pub rollout_index: usize,
    pub trajectory: Trajectory,
    pub parts: Vec<RolloutPart>,
    pub events: Vec<RolloutEvent>,
    pub retrieval_calls: usize,
}

impl Rollout {
    /// The trajectory text, i.e. everything after the prompt.
    pub fn trajectory_text(&self) -> &str {
        &self.trajectory.raw_text
    }
}

/// Substitutes the instance into the prompt template; trace steps are
/// newline-joined in order.
pub fn assemble_prompt(instance: &VerificationInstance) -> String {
    PROMPT_TEMPLATE
        .replacen("{question}", &instance.question, 1)
        .replacen("{trace}", &instance.trace_steps.join("\n"), 1)
}

/// Runs the verification loop until the policy answers or a bound is hit.
pub fn run_verification(
    policy: &dyn PolicyBackend,
    retriever: &RetrievalBackend,
    instance: &VerificationInstance,
    options: &RolloutOptions,
    rollout_index: usize,
) -> Rollout {
    let prompt = assemble_prompt(instance);
    let instance_key = fnv1a(instance.instance_id.as_bytes());

    let mut trajectory_text = String::new();
    let mut parts: Vec<RolloutPart> = Vec::new();
    let mut events: Vec<RolloutEvent> = Vec::new();
    let mut retrieval_calls = 0usize;
    let mut searches_executed = 0usize;
    let mut turn_index = 0usize;

    loop {
        let context = format!("{prompt}{trajectory_text}");
        if context.chars().count() > options.limits.max_context_chars {
            events.push(RolloutEvent::ContextOverflow);
            break;
        }

        let request = GenerationRequest {
            context,
            stop_sequences: vec!["</search>".to_string(), "</answer>".to_string()],
            temperature: options.temperature,
            top_p: options.top_p,
            max_new_tokens: options.limits.max_new_tokens_per_turn,
            seed: derive_seed(
                options.seed,
                "gen",
                &[instance_key, rollout_index as u64, turn_index as u64],
            ),
            instance_id: instance.instance_id.clone(),
            turn_index,
        };
        let result = match policy.generate(&request) {
            Ok(result) => result,
            Err(e) => {
                events.push(RolloutEvent::BackendFailed(e.to_string()));
                break;
            }
        };
        turn_index += 1;
        trajectory_text.push_str(&result.text);
        parts.push(RolloutPart::Generated {
            text: result.text.clone(),
            token_logprobs: result.token_logprobs.clone(),
        });

        if result.text.ends_with("</answer>") {
            break;
        }
        if result.text.ends_with("</search>") {
            let chunk = parse(&result.text);
            let query = match chunk.segments_of(SegmentKind::Search).last() {
                Some(seg) => seg.text.clone(),
                None => {
                    events.push(RolloutEvent::MalformedSearch);
                    break;
                }
            };
            if searches_executed >= options.limits.max_turns {
                events.push(RolloutEvent::TurnLimitReached);
                break;
            }
            let mut hits = match retriever.retrieve(&query, options.retrieval_k) {
                Ok(hits) => hits,
                Err(e) => {
                    events.push(RolloutEvent::RetrievalFailed(e.to_string()));
                    Vec::new()
                }
            };
            searches_executed += 1;
            retrieval_calls += 1;
            truncate_hits(&mut hits, options.max_snippet_chars);
            let info = format!(
                "\n<information>{}</information>\n",
                format_information(&hits)
            );
            trajectory_text.push_str(&info);
            parts.push(RolloutPart::Injected { text: info });
            continue;
        }
        events.push(match result.stop_reason {
            StopReason::MaxTokens => RolloutEvent::UnterminatedGeneration,
            _ => RolloutEvent::UnterminatedGeneration,
        });
        break;
    }

    Rollout {
        instance_id: instance.instance_id.clone(),
        rollout_index,
        trajectory: parse(&trajectory_text),
        parts,
        events,
        retrieval_calls,
    }
}

/// `G` rollouts with rewards and group-mean advantages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub instance: VerificationInstance,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn reward_values(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.total).collect()
    }
}

/// Samples `group_size` independent rollouts for one instance. Sampling
/// randomness is seeded per (instance, rollout index), so groups are
/// reproducible.
pub fn rollout_group(
    policy: &dyn PolicyBackend,
    retriever: &RetrievalBackend,
    instance: &VerificationInstance,
    group_size: usize,
    options: &RolloutOptions,
) -> RolloutGroup {
    assert!(group_size >= 2, "group size must be at least 2");
    let rollouts: Vec<Rollout> = (0..group_size)
        .map(|ix| run_verification(policy, retriever, instance, options, ix))
        .collect();
    let rewards: Vec<RewardBreakdown> = rollouts
        .iter()
        .map(|r| total_reward(&r.trajectory, instance.gold_label))
        .collect();
    let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
    let advantages = crate::grpo::group_advantages(&totals).expect("group size checked above");
    RolloutGroup {
        instance: instance.clone(),
        rollouts,
        rewards,
        advantages,
    }
}

/// Runs `rollout_group` for many instances on a scoped worker pool.
/// Output order matches input order regardless of scheduling.
pub fn rollout_groups_parallel(
    policy: &dyn PolicyBackend,
    retriever: &RetrievalBackend,
    instances: &[VerificationInstance],
    group_size: usize,
    options: &RolloutOptions,
    workers: usize,
) -> Vec<RolloutGroup> {
    let workers = workers.max(1).min(instances.len().max(1));
    if workers <= 1 || instances.len() <= 1 {
        return instances
            .iter()
            .map(|ins| rollout_group(policy, retriever, ins, group_size, options))
            .collect();
    }

    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<RolloutGroup>> = Vec::new();
    slots.resize_with(instances.len(), || None);
    let slots = std::sync::Mutex::new(&mut slots);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let ix = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if ix >= instances.len() {
                    break;
                }
                let group = rollout_group(policy, retriever, &instances[ix], group_size, options);
                slots.lock().expect("worker panicked holding results")[ix] = Some(group);
            });
        }
    });

    let slots = slots.into_inner().expect("all workers joined");
    slots
        .iter_mut()
        .map(|slot| slot.take().expect("every slot filled"))
        .collect()
}

/// The JSONL record emitted for each rollout
/// (`rollout run` output schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub instance_id: String,
    pub rollout_index: usize,
    pub raw_text: String,
    pub reward: RewardBreakdown,
    pub terminal: bool,
    pub retrieval_calls: usize,
    pub config_hash: String,
    pub seed: u64,
}

impl RolloutRecord {
    pub fn from_group(group: &RolloutGroup, config_hash: &str, seed: u64) -> Vec<RolloutRecord> {
        group
            .rollouts
            .iter()
            .zip(&group.rewards)
            .map(|(rollout, reward)| RolloutRecord {
                instance_id: rollout.instance_id.clone(),
                rollout_index: rollout.rollout_index,
                raw_text: rollout.trajectory.raw_text.clone(),
                reward: *reward,
                terminal: rollout.trajectory.terminal,
                retrieval_calls: rollout.retrieval_calls,
                config_hash: config_hash.to_string(),
                seed,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mock::{AlwaysSearchPolicy, MockPolicy};
    use crate::protocol::{render, validate_format};
    use crate::retrieval::build_index;
    use crate::samples;

    fn instance() -> VerificationInstance {
        VerificationInstance {
            instance_id: "case-1".into(),
            question: "which drug caused the symptoms?".into(),
            trace_steps: vec!["step one".into(), "step two".into(), "step three".into()],
            gold_label: 0,
        }
    }

    fn lexical() -> RetrievalBackend {
        RetrievalBackend::Lexical(build_index(samples::mini_corpus()).unwrap())
    }

    #[test]
    fn prompt_contains_headers_and_ordered_steps() {
        let prompt = assemble_prompt(&instance());
        assert!(prompt.contains("Medical Problem:"));
        assert!(prompt.contains("Reasoning Trace:"));
        assert!(prompt.contains("step one\nstep two\nstep three"));
        assert_eq!(prompt, assemble_prompt(&instance()));
    }

    #[test]
    fn direct_answer_rollout() {
        let policy = MockPolicy::sequence(["<think>clear</think>\n<answer>0</answer>"]);
        let rollout = run_verification(
            &policy,
            &lexical(),
            &instance(),
            &RolloutOptions::default(),
            0,
        );
        assert_eq!(rollout.trajectory.segments.len(), 2);
        assert!(rollout.trajectory.terminal);
        assert_eq!(rollout.retrieval_calls, 0);
        assert!(rollout.events.is_empty());
    }

    #[test]
    fn single_search_rollout_inserts_information() {
        let policy = MockPolicy::sequence([
            "<think>need evidence</think>\n<search>cisplatin ototoxicity</search>",
            "<think>confirmed</think>\n<answer>0</answer>",
        ]);
        let rollout = run_verification(
            &policy,
            &lexical(),
            &instance(),
            &RolloutOptions::default(),
            0,
        );
        let kinds: Vec<_> = rollout.trajectory.segments.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                SegmentKind::Think,
                SegmentKind::Search,
                SegmentKind::Information,
                SegmentKind::Think,
                SegmentKind::Answer
            ]
        );
        assert_eq!(rollout.retrieval_calls, 1);
        // The information payload is the formatted top-k over the corpus.
        let info = rollout
            .trajectory
            .segments_of(SegmentKind::Information)
            .next()
            .unwrap();
        assert!(info.text.contains("[1] Cisplatin toxicity profile"));
        // Trajectory renders back to the exact text the policy saw appended.
        assert_eq!(
            render(&rollout.trajectory).unwrap(),
            rollout.trajectory.raw_text
        );
        assert!(validate_format(&rollout.trajectory).well_formed);
    }

    #[test]
    fn turn_cap_bounds_information_segments() {
        let mut options = RolloutOptions::default();
        options.limits.max_turns = 4;
        let rollout = run_verification(&AlwaysSearchPolicy, &lexical(), &instance(), &options, 0);
        let info_count = rollout
            .trajectory
            .segments_of(SegmentKind::Information)
            .count();
        assert_eq!(info_count, 4);
        assert_eq!(rollout.retrieval_calls, 4);
        assert!(!rollout.trajectory.terminal);
        assert!(rollout.events.contains(&RolloutEvent::TurnLimitReached));
        assert_eq!(total_reward(&rollout.trajectory, 0).total, 0.0);
    }

    #[test]
    fn retrieval_count_always_matches_information_segments() {
        for max_turns in [1, 2, 3] {
            let mut options = RolloutOptions::default();
            options.limits.max_turns = max_turns;
            let rollout =
                run_verification(&AlwaysSearchPolicy, &lexical(), &instance(), &options, 0);
            assert_eq!(
                rollout.retrieval_calls,
                rollout
                    .trajectory
                    .segments_of(SegmentKind::Information)
                    .count()
            );
        }
    }

    #[test]
    fn backend_failure_degrades_without_panic() {
        // Script only turn 0: the second generate call fails.
        let policy = MockPolicy::sequence(["<think>x</think>\n<search>cisplatin</search>"]);
        let rollout = run_verification(
            &policy,
            &lexical(),
            &instance(),
            &RolloutOptions::default(),
            0,
        );
        assert!(!rollout.trajectory.terminal);
        assert!(matches!(rollout.events[0], RolloutEvent::BackendFailed(_)));
        assert_eq!(rollout.retrieval_calls, 1);
    }

    #[test]
    fn context_overflow_stops_episode() {
        let mut options = RolloutOptions::default();
        options.limits.max_context_chars = 10;
        let policy = MockPolicy::sequence(["<think>x</think><answer>1</answer>"]);
        let rollout = run_verification(&policy, &lexical(), &instance(), &options, 0);
        assert!(rollout.trajectory.segments.is_empty());
        assert_eq!(rollout.events, vec![RolloutEvent::ContextOverflow]);
    }

    #[test]
    fn deterministic_group_has_zero_advantages() {
        let policy = MockPolicy::sequence(["<think>sure</think>\n<answer>0</answer>"]);
        let group = rollout_group(
            &policy,
            &lexical(),
            &instance(),
            3,
            &RolloutOptions::default(),
        );
        assert_eq!(group.rollouts.len(), 3);
        let first = group.rollouts[0].trajectory.raw_text.clone();
        assert!(group
            .rollouts
            .iter()
            .all(|r| r.trajectory.raw_text == first));
        assert!(group.advantages.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn mixed_group_advantages_by_hand() {
        // Judges 0 (correct) on rollout 0 and 1 (wrong) on rollout 1, via a
        // policy that keys the judgment off the rollout's derived seed.
        struct SeedParity;
        impl crate::policy::PolicyBackend for SeedParity {
            fn generate(
                &self,
                req: &crate::policy::GenerationRequest,
            ) -> Result<crate::policy::GenerationResult, crate::policy::PolicyError> {
                let judgment = if req.seed.is_multiple_of(2) { "0" } else { "1" };
                Ok(crate::policy::GenerationResult {
                    text: format!("<think>t</think>\n<answer>{judgment}</answer>"),
                    stop_reason: crate::policy::StopReason::StopSequence,
                    token_logprobs: None,
                })
            }
            fn judgment_logits(
                &self,
                _context: &str,
            ) -> Result<(f64, f64), crate::policy::PolicyError> {
                Err(crate::policy::PolicyError::LogitsUnavailable("n/a".into()))
            }
        }
        // Pick a base seed whose derived rollout seeds have opposite parity.
        let ins = instance();
        let key = fnv1a(ins.instance_id.as_bytes());
        let seed = (0..)
            .find(|&s| {
                derive_seed(s, "gen", &[key, 0, 0]).is_multiple_of(2)
                    && !derive_seed(s, "gen", &[key, 1, 0]).is_multiple_of(2)
            })
            .unwrap();
        let options = RolloutOptions {
            seed,
            ..Default::default()
        };
        let group = rollout_group(&SeedParity, &lexical(), &ins, 2, &options);
        assert_eq!(group.reward_values(), vec![1.0, 0.0]);
        assert_eq!(group.advantages, vec![0.5, -0.5]);
    }

    #[test]
    fn parallel_rollouts_match_serial() {
        let policy = MockPolicy::sequence([
            "<think>need evidence</think>\n<search>cisplatin</search>",
            "<think>ok</think>\n<answer>0</answer>",
        ]);
        let retriever = lexical();
        let instances: Vec<VerificationInstance> = (0..6)
            .map(|i| {
                let mut ins = instance();
                ins.instance_id = format!("case-{i}");
                ins
            })
            .collect();
        let options = RolloutOptions::default();
        let serial = rollout_groups_parallel(&policy, &retriever, &instances, 2, &options, 1);
        let parallel = rollout_groups_parallel(&policy, &retriever, &instances, 2, &options, 4);
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.instance.instance_id, b.instance.instance_id);
            assert_eq!(a.reward_values(), b.reward_values());
            for (ra, rb) in a.rollouts.iter().zip(&b.rollouts) {
                assert_eq!(ra.trajectory.raw_text, rb.trajectory.raw_text);
            }
        }
    }
}
