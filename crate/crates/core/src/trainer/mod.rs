//! Replay-augmented group-relative policy optimization.
//!
//! Each step samples a group of `n` episodes per query, scores them with the
//! hierarchical verifier, drops groups whose binary rewards have standard
//! deviation ≤ η (uniformly solved or uniformly failed), normalizes the rest
//! into advantages, and ascends a clipped surrogate with an exact KL penalty
//! to a reference snapshot. Queries whose whole group failed enter a FIFO
//! experience buffer and are re-injected into every γ-th batch until one of
//! their rollouts finally succeeds.

mod run;
mod surrogate;

pub use run::{evaluate, train, Checkpoint, EvalOutcome, TrainOutcome, CHECKPOINT_FORMAT_VERSION};
pub use surrogate::{surrogate_loss, SurrogateError};

use crate::protocol::{EpisodeLimits, Trajectory};
use crate::verifier::RewardRecord;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainerConfigError {
    #[error("rollout group size must be at least 2, got {0}")]
    GroupSize(usize),
    #[error("clip epsilon must lie in (0, 1), got {0}")]
    ClipEpsilon(f64),
    #[error("std filter threshold must be non-negative, got {0}")]
    StdThreshold(f64),
    #[error("replay period must be at least 1, got {0}")]
    ReplayPeriod(u64),
    #[error("replay fraction must lie in [0, 1], got {0}")]
    ReplayFraction(f64),
    #[error("{0} must be positive")]
    Positive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    /// Rollout group size n.
    pub group_size: usize,
    /// Clip radius for the surrogate ratio.
    pub clip_epsilon: f64,
    /// KL penalty coefficient.
    pub kl_beta: f64,
    /// Std filter threshold η: groups with `std(r) <= η` are dropped.
    pub std_filter_threshold: f64,
    /// Replay period γ: buffer queries join every γ-th batch.
    pub replay_period: u64,
    /// Disabled by the no-replay ablation.
    pub replay_enabled: bool,
    /// Fraction of a replayed batch drawn from the buffer.
    pub replay_fraction: f64,
    /// Desk-scale step size for plain gradient ascent.
    pub learning_rate: f64,
    /// Queries per step.
    pub batch_size: usize,
    pub total_steps: u64,
    /// How often the KL reference snapshot is refreshed (steps).
    pub ref_refresh: u64,
    /// Strict-objective mode: the surrogate ratio is taken against the KL
    /// reference snapshot instead of the per-step behavior snapshot.
    pub ratio_against_ref: bool,
    pub buffer_capacity: Option<usize>,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub limits: EpisodeLimits,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            std_filter_threshold: 0.1,
            replay_period: 10,
            replay_enabled: true,
            replay_fraction: 0.5,
            learning_rate: 0.1,
            batch_size: 8,
            total_steps: 300,
            ref_refresh: 10,
            ratio_against_ref: false,
            buffer_capacity: None,
            seed: 0,
            checkpoint_every: 0,
            limits: EpisodeLimits::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerConfigError> {
        if self.group_size < 2 {
            return Err(TrainerConfigError::GroupSize(self.group_size));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(TrainerConfigError::ClipEpsilon(self.clip_epsilon));
        }
        if self.std_filter_threshold < 0.0 {
            return Err(TrainerConfigError::StdThreshold(self.std_filter_threshold));
        }
        if self.replay_period == 0 {
            return Err(TrainerConfigError::ReplayPeriod(self.replay_period));
        }
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(TrainerConfigError::ReplayFraction(self.replay_fraction));
        }
        if self.batch_size == 0 {
            return Err(TrainerConfigError::Positive("batch_size"));
        }
        if self.total_steps == 0 {
            return Err(TrainerConfigError::Positive("total_steps"));
        }
        if self.ref_refresh == 0 {
            return Err(TrainerConfigError::Positive("ref_refresh"));
        }
        if self.learning_rate <= 0.0 {
            return Err(TrainerConfigError::Positive("learning_rate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutSource {
    Dataset,
    Buffer,
}

/// One query's group of rollouts with rewards and (when kept) advantages.
#[derive(Debug, Clone)]
pub struct GroupRollout {
    pub query_id: String,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<u8>,
    pub reward_records: Vec<RewardRecord>,
    pub advantages: Option<Vec<f64>>,
    pub source: RolloutSource,
}

/// Population standard deviation of binary rewards.
pub fn reward_std(rewards: &[u8]) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().map(|&r| r as f64).sum::<f64>() / n;
    let var = rewards
        .iter()
        .map(|&r| (r as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeepDecision {
    Kept,
    Filtered,
}

/// Drop groups whose rewards are too uniform to carry a learning signal.
pub fn keep_filter(rewards: &[u8], eta: f64) -> KeepDecision {
    if reward_std(rewards) <= eta {
        KeepDecision::Filtered
    } else {
        KeepDecision::Kept
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AdvantageError {
    #[error("advantages requested for a zero-variance group; it should have been filtered")]
    ZeroVariance,
}

/// Group-relative advantages `(r_i − mean) / std` with population std.
pub fn compute_advantages(rewards: &[u8]) -> Result<Vec<f64>, AdvantageError> {
    let std = reward_std(rewards);
    if std == 0.0 {
        return Err(AdvantageError::ZeroVariance);
    }
    let mean = rewards.iter().map(|&r| r as f64).sum::<f64>() / rewards.len() as f64;
    Ok(rewards.iter().map(|&r| (r as f64 - mean) / std).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub query_id: String,
    pub enqueued_step: u64,
}

/// FIFO store of queries whose whole rollout group failed. No duplicates;
/// entries leave only when a buffer-sourced group finally succeeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBuffer {
    entries: VecDeque<BufferEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<usize>,
}

impl ExperienceBuffer {
    pub fn with_capacity(capacity: Option<usize>) -> ExperienceBuffer {
        ExperienceBuffer {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, query_id: &str) -> bool {
        self.entries.iter().any(|e| e.query_id == query_id)
    }

    /// First `k` queued ids in FIFO order (peek; eviction happens on
    /// success).
    pub fn head(&self, k: usize) -> Vec<String> {
        self.entries
            .iter()
            .take(k)
            .map(|e| e.query_id.clone())
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    pub fn enqueue_if_absent(&mut self, query_id: &str, step: u64) -> bool {
        if self.contains(query_id) {
            return false;
        }
        if let Some(cap) = self.capacity {
            if self.entries.len() >= cap {
                return false;
            }
        }
        self.entries.push_back(BufferEntry {
            query_id: query_id.to_string(),
            enqueued_step: step,
        });
        true
    }

    pub fn remove(&mut self, query_id: &str) -> bool {
        let before = self.entries.len();
        self.entries.retain(|e| e.query_id != query_id);
        before != self.entries.len()
    }
}

/// Buffer maintenance after a group is scored: an all-failed group enqueues
/// its query; a buffer-sourced group with any success evicts it. Filtered
/// groups still pass through here (the two mechanisms are independent).
pub fn buffer_update(buffer: &mut ExperienceBuffer, group: &GroupRollout, step: u64) {
    let any_success = group.rewards.contains(&1);
    if !any_success {
        buffer.enqueue_if_absent(&group.query_id, step);
    } else if group.source == RolloutSource::Buffer {
        buffer.remove(&group.query_id);
    }
}

/// Per-step telemetry. One record per training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_reward: f64,
    pub policy_entropy: f64,
    pub grad_norm: f64,
    pub mean_response_length: f64,
    pub mean_turn_count: f64,
    pub tool_call_accuracy: f64,
    pub verifier_success_rate: f64,
    pub sample_keep_rate: f64,
    pub loss_mask_ratio: f64,
    pub buffer_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StepMetrics {
    /// Every fraction-valued field, for the telemetry range check.
    pub fn fractions(&self) -> [(&'static str, f64); 5] {
        [
            ("mean_reward", self.mean_reward),
            ("tool_call_accuracy", self.tool_call_accuracy),
            ("verifier_success_rate", self.verifier_success_rate),
            ("sample_keep_rate", self.sample_keep_rate),
            ("loss_mask_ratio", self.loss_mask_ratio),
        ]
    }
}

/// Write metrics as JSON-lines.
pub fn write_metrics_jsonl(
    path: &std::path::Path,
    metrics: &[StepMetrics],
) -> Result<(), crate::jsonl::JsonlError> {
    crate::jsonl::write_jsonl(path, metrics)
}

/// Write metrics as CSV (fixed column order, one row per step).
pub fn write_metrics_csv(
    path: &std::path::Path,
    metrics: &[StepMetrics],
) -> Result<(), std::io::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "step",
        "mean_reward",
        "policy_entropy",
        "grad_norm",
        "mean_response_length",
        "mean_turn_count",
        "tool_call_accuracy",
        "verifier_success_rate",
        "sample_keep_rate",
        "loss_mask_ratio",
        "buffer_size",
    ])?;
    for m in metrics {
        writer.write_record([
            m.step.to_string(),
            m.mean_reward.to_string(),
            m.policy_entropy.to_string(),
            m.grad_norm.to_string(),
            m.mean_response_length.to_string(),
            m.mean_turn_count.to_string(),
            m.tool_call_accuracy.to_string(),
            m.verifier_success_rate.to_string(),
            m.sample_keep_rate.to_string(),
            m.loss_mask_ratio.to_string(),
            m.buffer_size.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error(transparent)]
    Config(#[from] TrainerConfigError),
}

/// Sample `n` independent episodes for one query with distinct rng streams
/// and score each with the reward model. Episode-level failures surface as
/// malformed trajectories with reward 0, never as errors.
#[allow(clippy::too_many_arguments)]
pub fn rollout_group(
    params: &crate::policy::PolicyParams,
    sandbox: &crate::sandbox::Sandbox,
    verifier: &dyn crate::verifier::RewardModel,
    query: &crate::domain::Query,
    n: usize,
    limits: &EpisodeLimits,
    seed: u64,
    step: u64,
    source: RolloutSource,
) -> Result<GroupRollout, RolloutError> {
    use rayon::prelude::*;
    if n < 2 {
        return Err(TrainerConfigError::GroupSize(n).into());
    }
    let step_tag = step.to_string();
    let results: Vec<(Trajectory, RewardRecord)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let stream =
                crate::rng::stream(seed, &["episode", &step_tag, &query.id, &i.to_string()]);
            let mut agent = crate::policy::SoftmaxPolicy::sampler(params.clone(), stream);
            let mut env = crate::protocol::SandboxEnv { sandbox };
            let trajectory = crate::protocol::run_episode(&mut agent, &mut env, query, limits);
            let record = verifier.joint_reward(query, &trajectory);
            (trajectory, record)
        })
        .collect();
    let mut trajectories = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut reward_records = Vec::with_capacity(n);
    for (trajectory, record) in results {
        rewards.push(record.r);
        reward_records.push(record);
        trajectories.push(trajectory);
    }
    Ok(GroupRollout {
        query_id: query.id.clone(),
        trajectories,
        rewards,
        reward_records,
        advantages: None,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_filter_matches_spec_examples() {
        assert_eq!(keep_filter(&[1; 8], 0.1), KeepDecision::Filtered);
        assert_eq!(keep_filter(&[0; 8], 0.1), KeepDecision::Filtered);
        assert_eq!(
            keep_filter(&[1, 1, 0, 0, 0, 0, 0, 0], 0.1),
            KeepDecision::Kept
        );
        let std = reward_std(&[1, 1, 0, 0, 0, 0, 0, 0]);
        assert!((std - 0.4330127018922193).abs() < 1e-12);
    }

    #[test]
    fn advantages_match_direct_arithmetic() {
        let a = compute_advantages(&[1, 1, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!((a[0] - 1.7320508075688772).abs() < 1e-9);
        assert!((a[2] - (-0.5773502691896257)).abs() < 1e-9);
        let two = compute_advantages(&[1, 0]).unwrap();
        assert!((two[0] - 1.0).abs() < 1e-12);
        assert!((two[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn advantages_sum_to_zero() {
        for pattern in [[1u8, 0, 0, 0, 0, 0, 0, 0], [1, 1, 1, 0, 0, 0, 0, 1]] {
            let a = compute_advantages(&pattern).unwrap();
            assert!(a.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_advantages_are_a_contract_violation() {
        assert_eq!(
            compute_advantages(&[1; 4]),
            Err(AdvantageError::ZeroVariance)
        );
    }

    #[test]
    fn buffer_enqueues_failures_and_evicts_replayed_successes() {
        let mut buffer = ExperienceBuffer::default();
        let group = |rewards: Vec<u8>, source| GroupRollout {
            query_id: "q1".into(),
            trajectories: vec![],
            rewards,
            reward_records: vec![],
            advantages: None,
            source,
        };
        buffer_update(&mut buffer, &group(vec![0, 0], RolloutSource::Dataset), 1);
        assert!(buffer.contains("q1"));
        // Re-enqueue attempt is a no-op.
        buffer_update(&mut buffer, &group(vec![0, 0], RolloutSource::Dataset), 2);
        assert_eq!(buffer.len(), 1);
        // Dataset-sourced success leaves the buffer untouched.
        buffer_update(&mut buffer, &group(vec![1, 0], RolloutSource::Dataset), 3);
        assert!(buffer.contains("q1"));
        // Buffer-sourced success evicts.
        buffer_update(&mut buffer, &group(vec![1, 0], RolloutSource::Buffer), 4);
        assert!(!buffer.contains("q1"));
    }

    #[test]
    fn buffer_preserves_fifo_order() {
        let mut buffer = ExperienceBuffer::default();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            buffer.enqueue_if_absent(id, i as u64);
        }
        assert_eq!(buffer.head(2), vec!["a".to_string(), "b".to_string()]);
        buffer.remove("a");
        assert_eq!(buffer.head(2), vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = TrainerConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainerConfig {
            group_size: 1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            clip_epsilon: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            clip_epsilon: 1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            replay_period: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            replay_fraction: 1.5,
            ..ok
        }
        .validate()
        .is_err());
    }
}
