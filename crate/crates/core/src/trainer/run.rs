//! The training loop, greedy evaluation, and checkpointing.

use super::{
    buffer_update, compute_advantages, keep_filter, rollout_group, surrogate_loss,
    ExperienceBuffer, GroupRollout, KeepDecision, RolloutSource, StepMetrics, TrainerConfig,
    TrainerConfigError,
};
use crate::domain::Query;
use crate::policy::{apply_grad, grad_norm, policy_entropy, PolicyParams, SoftmaxPolicy};
use crate::protocol::{parse_tool_call, run_episode, EpisodeLimits, SandboxEnv, Trajectory};
use crate::sandbox::{Sandbox, ToolResponse};
use crate::verifier::RewardModel;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Resumable training state: parameters, the KL reference snapshot, buffer,
/// and the last finished step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: u64,
    pub params: PolicyParams,
    pub ref_params: PolicyParams,
    pub buffer: ExperienceBuffer,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(
            path,
            serde_json::to_string(self).expect("checkpoint serializes"),
        )
    }

    pub fn load(path: &Path) -> Result<Checkpoint, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            ));
        }
        Ok(ckpt)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: Vec<StepMetrics>,
    pub buffer: ExperienceBuffer,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] TrainerConfigError),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("checkpoint io: {0}")]
    CheckpointIo(String),
}

/// Deterministic pass order: a seeded shuffle of the dataset per pass index,
/// so batches are a pure function of `(seed, step)` and resume replays the
/// exact schedule.
fn pass_order(dataset_len: usize, seed: u64, pass: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dataset_len).collect();
    let mut rng = crate::rng::stream(seed, &["pass", &pass.to_string()]);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn fresh_batch(dataset_len: usize, seed: u64, step: u64, batch_size: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch_size);
    let mut cursor = (step - 1) * batch_size as u64;
    while out.len() < batch_size {
        let pass = cursor / dataset_len as u64;
        let offset = (cursor % dataset_len as u64) as usize;
        let order = pass_order(dataset_len, seed, pass);
        let take = (dataset_len - offset).min(batch_size - out.len());
        out.extend_from_slice(&order[offset..offset + take]);
        cursor += take as u64;
    }
    out
}

/// Group statistics feeding [`StepMetrics`].
fn step_metrics(
    step: u64,
    groups: &[GroupRollout],
    kept: usize,
    entropy: f64,
    gradient_norm: f64,
    buffer_size: usize,
    note: Option<String>,
) -> StepMetrics {
    let trajectories: Vec<&Trajectory> =
        groups.iter().flat_map(|g| g.trajectories.iter()).collect();
    let n_traj = trajectories.len().max(1) as f64;
    let mean_reward = groups
        .iter()
        .flat_map(|g| g.rewards.iter().map(|&r| r as f64))
        .sum::<f64>()
        / n_traj;
    let mean_response_length = trajectories
        .iter()
        .map(|t| t.segments.len() as f64)
        .sum::<f64>()
        / n_traj;
    let mean_turn_count = trajectories
        .iter()
        .map(|t| t.tool_call_count() as f64)
        .sum::<f64>()
        / n_traj;

    let mut calls = 0usize;
    let mut good_calls = 0usize;
    for t in &trajectories {
        for (call_body, response_body) in t.turns() {
            calls += 1;
            let parsed = parse_tool_call(call_body).is_ok();
            let executed = response_body
                .and_then(ToolResponse::from_body)
                .is_some_and(|r| r.ok);
            if parsed && executed {
                good_calls += 1;
            }
        }
    }
    let tool_call_accuracy = if calls == 0 {
        1.0
    } else {
        good_calls as f64 / calls as f64
    };

    let verifier_failures = groups
        .iter()
        .flat_map(|g| g.reward_records.iter())
        .filter(|r| r.verifier_failed)
        .count();
    let verifier_success_rate = 1.0 - verifier_failures as f64 / n_traj;

    let (masked, total_decisions) = trajectories.iter().fold((0usize, 0usize), |(m, n), t| {
        (
            m + t.decisions.iter().filter(|d| d.masked).count(),
            n + t.decisions.len(),
        )
    });
    let loss_mask_ratio = if total_decisions == 0 {
        0.0
    } else {
        masked as f64 / total_decisions as f64
    };

    StepMetrics {
        step,
        mean_reward,
        policy_entropy: entropy,
        grad_norm: gradient_norm,
        mean_response_length,
        mean_turn_count,
        tool_call_accuracy,
        verifier_success_rate,
        sample_keep_rate: kept as f64 / groups.len().max(1) as f64,
        loss_mask_ratio,
        buffer_size,
        note,
    }
}

/// Run replay-augmented policy optimization.
///
/// Per step: assemble the batch (every γ-th step substitutes buffer queries
/// for a fraction of it), roll out groups, filter, compute advantages, take
/// one gradient-ascent step on the surrogate, update the buffer, and append
/// one metrics record. The behavior snapshot refreshes every step; the KL
/// reference every `ref_refresh` steps.
pub fn train(
    config: &TrainerConfig,
    dataset: &[Query],
    sandbox: &Sandbox,
    verifier: &dyn RewardModel,
    initial: PolicyParams,
    resume: Option<Checkpoint>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let by_id: BTreeMap<&str, &Query> = dataset.iter().map(|q| (q.id.as_str(), q)).collect();

    let (mut params, mut theta_ref, mut buffer, start_step) = match resume {
        Some(ckpt) => (ckpt.params, ckpt.ref_params, ckpt.buffer, ckpt.step + 1),
        None => {
            let theta_ref = initial.clone();
            (
                initial,
                theta_ref,
                ExperienceBuffer::with_capacity(config.buffer_capacity),
                1,
            )
        }
    };
    let mut metrics = Vec::new();

    for step in start_step..=config.total_steps {
        if (step - 1) % config.ref_refresh == 0 {
            theta_ref = params.clone();
        }
        let theta_old = params.clone();

        // Batch assembly: fresh queries, with the FIFO head of the buffer
        // substituted in on replay steps.
        let fresh = fresh_batch(dataset.len(), config.seed, step, config.batch_size);
        let mut batch: Vec<(&Query, RolloutSource)> = fresh
            .iter()
            .map(|&i| (&dataset[i], RolloutSource::Dataset))
            .collect();
        if config.replay_enabled && step % config.replay_period == 0 && !buffer.is_empty() {
            let want = ((config.batch_size as f64) * config.replay_fraction).floor() as usize;
            let replayed = buffer.head(want.min(config.batch_size));
            for (slot, query_id) in replayed.iter().enumerate() {
                if let Some(query) = by_id.get(query_id.as_str()) {
                    batch[slot] = (query, RolloutSource::Buffer);
                }
            }
        }

        let mut groups: Vec<GroupRollout> = Vec::with_capacity(batch.len());
        for (query, source) in &batch {
            let group = rollout_group(
                &theta_old,
                sandbox,
                verifier,
                query,
                config.group_size,
                &config.limits,
                config.seed,
                step,
                *source,
            )
            .map_err(|e| {
                TrainError::Config(match e {
                    super::RolloutError::Config(c) => c,
                })
            })?;
            groups.push(group);
        }

        // Filtering and advantages; filtered groups still drive the buffer.
        let mut kept_count = 0usize;
        for group in &mut groups {
            if keep_filter(&group.rewards, config.std_filter_threshold) == KeepDecision::Kept {
                group.advantages =
                    Some(compute_advantages(&group.rewards).expect("kept ⇒ std > 0"));
                kept_count += 1;
            }
        }

        let kept: Vec<&GroupRollout> = groups.iter().filter(|g| g.advantages.is_some()).collect();
        let ratio_anchor = if config.ratio_against_ref {
            &theta_ref
        } else {
            &theta_old
        };
        let mut note = None;
        let gradient_norm = if kept.is_empty() {
            // Zero-update step: everything was uniformly solved or failed.
            note = Some("all groups filtered; zero-update step".to_string());
            0.0
        } else {
            match surrogate_loss(
                &params,
                ratio_anchor,
                &theta_ref,
                &kept,
                config.clip_epsilon,
                config.kl_beta,
            ) {
                Ok((_objective, grad)) => {
                    let norm = grad_norm(&grad);
                    apply_grad(&mut params, &grad, config.learning_rate);
                    norm
                }
                Err(e) => {
                    note = Some(format!("update aborted: {e}"));
                    0.0
                }
            }
        };

        for group in &groups {
            buffer_update(&mut buffer, group, step);
        }

        // Entropy at the sampling parameters over the states visited by
        // unmasked decisions this step.
        let states: Vec<(u16, u8)> = groups
            .iter()
            .flat_map(|g| g.trajectories.iter())
            .flat_map(|t| t.decisions.iter())
            .filter(|d| !d.masked)
            .map(|d| (d.bucket, d.valid))
            .collect();
        let entropy = policy_entropy(&theta_old, &states);

        metrics.push(step_metrics(
            step,
            &groups,
            kept_count,
            entropy,
            gradient_norm,
            buffer.len(),
            note,
        ));

        if let Some(dir) = checkpoint_dir {
            let due = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
            if due || step == config.total_steps {
                let ckpt = Checkpoint {
                    format_version: CHECKPOINT_FORMAT_VERSION,
                    step,
                    params: params.clone(),
                    ref_params: theta_ref.clone(),
                    buffer: buffer.clone(),
                };
                ckpt.save(&dir.join(format!("checkpoint-{step:05}.json")))
                    .map_err(|e| TrainError::CheckpointIo(e.to_string()))?;
            }
        }
    }

    Ok(TrainOutcome {
        params,
        metrics,
        buffer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// Final pass rate as a percentage.
    pub pass_rate: f64,
    pub passed: usize,
    pub total: usize,
    /// Per-query reward, in input order.
    pub per_query: Vec<(String, u8)>,
}

/// Greedy-decode every query once and report the percentage that earn
/// reward 1.
pub fn evaluate(
    params: &PolicyParams,
    sandbox: &Sandbox,
    verifier: &dyn RewardModel,
    queries: &[Query],
    limits: &EpisodeLimits,
) -> EvalOutcome {
    use rayon::prelude::*;
    let per_query: Vec<(String, u8)> = queries
        .par_iter()
        .map(|query| {
            let mut agent = SoftmaxPolicy::greedy(params.clone());
            let mut env = SandboxEnv { sandbox };
            let trajectory = run_episode(&mut agent, &mut env, query, limits);
            (
                query.id.clone(),
                verifier.joint_reward(query, &trajectory).r,
            )
        })
        .collect();
    let passed = per_query.iter().filter(|(_, r)| *r == 1).count();
    let total = per_query.len();
    let pass_rate = if total == 0 {
        0.0
    } else {
        passed as f64 / total as f64 * 100.0
    };
    EvalOutcome {
        pass_rate,
        passed,
        total,
        per_query,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_batches_cycle_deterministically() {
        let a = fresh_batch(10, 7, 1, 4);
        let b = fresh_batch(10, 7, 1, 4);
        assert_eq!(a, b);
        // Consecutive steps tile a full pass before repeating any index.
        let mut seen: Vec<usize> = Vec::new();
        for step in 1..=5 {
            seen.extend(fresh_batch(10, 7, step, 4));
        }
        let mut first_pass: Vec<usize> = seen[..10].to_vec();
        first_pass.sort_unstable();
        assert_eq!(first_pass, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn pass_rate_formats_to_hand_counts() {
        let outcome = EvalOutcome {
            pass_rate: 3.0 / 8.0 * 100.0,
            passed: 3,
            total: 8,
            per_query: vec![],
        };
        assert_eq!(format!("{:.2}", outcome.pass_rate), "37.50");
    }
}
