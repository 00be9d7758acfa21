//! Clipped surrogate objective with exact KL penalty, and its analytic
//! gradient.
//!
//! Per trajectory: `ratio = exp(logp_θ − logp_snapshot)` over unmasked
//! decisions, contributing `min(ratio·A, clip(ratio, 1−ε, 1+ε)·A)`. A
//! clipped trajectory contributes a constant, so no gradient flows through
//! its ratio. The KL term is summed in closed form over the unique feature
//! states visited by each group's unmasked decisions, against the reference
//! snapshot. The returned value is the objective to *maximize*; the trainer
//! ascends it.

use super::GroupRollout;
use crate::policy::{
    accumulate_kl_grad, accumulate_log_prob_grad, trajectory_log_prob, GradMap, PolicyParams,
};
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SurrogateError {
    #[error("group {0} has no advantages; filtered groups cannot enter the objective")]
    MissingAdvantages(String),
    #[error("non-finite intermediate in the surrogate ({0}); step aborted")]
    NonFinite(String),
}

/// Objective value and gradient over a batch of kept groups.
///
/// `theta_old` is the ratio denominator (the per-step behavior snapshot, or
/// the reference snapshot in strict mode); `theta_ref` anchors the KL term.
pub fn surrogate_loss(
    theta: &PolicyParams,
    theta_old: &PolicyParams,
    theta_ref: &PolicyParams,
    groups: &[&GroupRollout],
    clip_epsilon: f64,
    kl_beta: f64,
) -> Result<(f64, GradMap), SurrogateError> {
    let mut grad = GradMap::new();
    if groups.is_empty() {
        return Ok((0.0, grad));
    }
    let group_weight = 1.0 / groups.len() as f64;
    let mut objective = 0.0;

    for group in groups {
        let advantages = group
            .advantages
            .as_ref()
            .ok_or_else(|| SurrogateError::MissingAdvantages(group.query_id.clone()))?;
        let n = group.trajectories.len() as f64;

        for (trajectory, &advantage) in group.trajectories.iter().zip(advantages) {
            let lp_new = trajectory_log_prob(theta, &trajectory.decisions);
            let lp_old = trajectory_log_prob(theta_old, &trajectory.decisions);
            let ratio = (lp_new - lp_old).exp();
            if !ratio.is_finite() {
                return Err(SurrogateError::NonFinite(format!(
                    "ratio for query {}",
                    group.query_id
                )));
            }
            let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
            let unclipped_term = ratio * advantage;
            let clipped_term = clipped * advantage;
            objective += group_weight / n * unclipped_term.min(clipped_term);
            // Gradient flows only while the unclipped branch is the minimum
            // taken strictly inside the clip boundary.
            let flows = if advantage >= 0.0 {
                ratio < 1.0 + clip_epsilon
            } else {
                ratio > 1.0 - clip_epsilon
            };
            if flows {
                let weight = group_weight / n * advantage * ratio;
                for decision in &trajectory.decisions {
                    accumulate_log_prob_grad(theta, decision, weight, &mut grad);
                }
            }
        }

        // KL over the unique visited states of this group.
        let mut visited: BTreeSet<(u16, u8)> = BTreeSet::new();
        for trajectory in &group.trajectories {
            for decision in &trajectory.decisions {
                if !decision.masked {
                    visited.insert((decision.bucket, decision.valid));
                }
            }
        }
        for (bucket, valid_bits) in visited {
            let valid = crate::policy::unpack_mask(valid_bits);
            let kl = accumulate_kl_grad(
                theta,
                theta_ref,
                bucket,
                &valid,
                -kl_beta * group_weight,
                &mut grad,
            );
            objective -= kl_beta * group_weight * kl;
        }
    }

    if !objective.is_finite() || grad.values().flatten().any(|g| !g.is_finite()) {
        return Err(SurrogateError::NonFinite("objective or gradient".into()));
    }
    Ok((objective, grad))
}
