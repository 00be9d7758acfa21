//! Decision policies: exact categorical softmax over action templates.
//!
//! The decision-level stand-in for a token-level LLM policy: at each turn the
//! agent picks one of [`actions::TEMPLATE_COUNT`] action templates from a
//! softmax over logits indexed by a finite feature bucket. Log-probabilities,
//! entropy, KL, and gradients are all closed-form, which is what lets the
//! trainer check its own gradients against finite differences exactly.
//!
//! Environment-injected tool responses appear in trajectories as *masked*
//! pseudo-decisions: they carry a feature bucket but contribute nothing to
//! likelihoods or gradients.

pub mod actions;
mod oracle;
mod softmax_agent;

pub use actions::{
    bucket_space, selector_for, AnswerSelector, GatheredState, StateFeatures, TemplateKind,
    ANSWER_TEMPLATE, TEMPLATE_COUNT, TEMPLATE_KINDS,
};
pub use oracle::{oracle_template, ScriptedOracle};
pub use softmax_agent::SoftmaxPolicy;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One recorded policy decision: enough state to recompute its probability
/// under any parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Feature bucket index (see [`actions::StateFeatures`]).
    pub bucket: u16,
    /// Bitmask over templates valid in this state.
    pub valid: u8,
    /// Chosen template index.
    pub chosen: u8,
    /// Exact log-probability at sampling time.
    pub log_prob: f64,
    /// Environment-injected pseudo-decision; contributes zero gradient.
    pub masked: bool,
}

impl DecisionRecord {
    pub fn valid_mask(&self) -> [bool; TEMPLATE_COUNT] {
        unpack_mask(self.valid)
    }
}

pub fn pack_mask(mask: &[bool; TEMPLATE_COUNT]) -> u8 {
    mask.iter()
        .enumerate()
        .fold(0u8, |acc, (i, &v)| acc | ((v as u8) << i))
}

pub fn unpack_mask(bits: u8) -> [bool; TEMPLATE_COUNT] {
    let mut mask = [false; TEMPLATE_COUNT];
    for (i, slot) in mask.iter_mut().enumerate() {
        *slot = bits & (1 << i) != 0;
    }
    mask
}

/// Learnable decision logits, lazily allocated per visited bucket. An absent
/// bucket means all-zero logits (uniform over valid templates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub format_version: u32,
    /// Monotonically increasing update counter.
    pub version: u64,
    pub logits: BTreeMap<u16, [f64; TEMPLATE_COUNT]>,
}

pub const PARAMS_FORMAT_VERSION: u32 = 1;

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            format_version: PARAMS_FORMAT_VERSION,
            version: 0,
            logits: BTreeMap::new(),
        }
    }
}

impl PolicyParams {
    pub fn logits_at(&self, bucket: u16) -> [f64; TEMPLATE_COUNT] {
        self.logits
            .get(&bucket)
            .copied()
            .unwrap_or([0.0; TEMPLATE_COUNT])
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("params serialize");
        std::fs::write(path, json)
    }

    pub fn load(path: &std::path::Path) -> Result<PolicyParams, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let params: PolicyParams = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if params.format_version != PARAMS_FORMAT_VERSION {
            return Err(format!(
                "unsupported params format version {}",
                params.format_version
            ));
        }
        Ok(params)
    }
}

/// Sparse gradient with the same shape as the logit table.
pub type GradMap = BTreeMap<u16, [f64; TEMPLATE_COUNT]>;

pub fn grad_norm(grad: &GradMap) -> f64 {
    grad.values()
        .flat_map(|row| row.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// In-place `params += scale * grad`; bumps the version counter. Rows whose
/// update is identically zero do not allocate a bucket (absent and all-zero
/// buckets are the same policy).
pub fn apply_grad(params: &mut PolicyParams, grad: &GradMap, scale: f64) {
    for (bucket, row) in grad {
        if row.iter().all(|g| scale * g == 0.0) {
            continue;
        }
        let entry = params
            .logits
            .entry(*bucket)
            .or_insert([0.0; TEMPLATE_COUNT]);
        for (e, g) in entry.iter_mut().zip(row) {
            *e += scale * g;
        }
    }
    params.version += 1;
}

/// Masked softmax over valid templates. Invalid entries get probability 0.
pub fn probs(
    params: &PolicyParams,
    bucket: u16,
    valid: &[bool; TEMPLATE_COUNT],
) -> [f64; TEMPLATE_COUNT] {
    let logits = params.logits_at(bucket);
    let mut max = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if valid[i] && l > max {
            max = l;
        }
    }
    let mut out = [0.0; TEMPLATE_COUNT];
    if max == f64::NEG_INFINITY {
        return out;
    }
    let mut z = 0.0;
    for i in 0..TEMPLATE_COUNT {
        if valid[i] {
            out[i] = (logits[i] - max).exp();
            z += out[i];
        }
    }
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Exact `log softmax` of one template.
pub fn log_prob_of(
    params: &PolicyParams,
    bucket: u16,
    valid: &[bool; TEMPLATE_COUNT],
    chosen: usize,
) -> f64 {
    debug_assert!(valid[chosen]);
    let logits = params.logits_at(bucket);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| valid[*i])
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| valid[*i])
        .map(|(_, l)| (l - max).exp())
        .sum();
    logits[chosen] - max - z.ln()
}

/// Sample one decision. With no valid template the answer template is forced
/// with probability one.
pub fn sample_decision(
    params: &PolicyParams,
    features: &StateFeatures,
    rng: &mut ChaCha8Rng,
) -> DecisionRecord {
    let valid = features.valid;
    if valid.iter().all(|v| !v) {
        return DecisionRecord {
            bucket: features.bucket,
            valid: pack_mask(&[false, false, false, false, false, false, true]),
            chosen: actions::ANSWER_TEMPLATE as u8,
            log_prob: 0.0,
            masked: false,
        };
    }
    let p = probs(params, features.bucket, &valid);
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = valid.iter().rposition(|&v| v).unwrap();
    for i in 0..TEMPLATE_COUNT {
        if !valid[i] {
            continue;
        }
        acc += p[i];
        if draw < acc {
            chosen = i;
            break;
        }
    }
    DecisionRecord {
        bucket: features.bucket,
        valid: pack_mask(&valid),
        chosen: chosen as u8,
        log_prob: log_prob_of(params, features.bucket, &valid, chosen),
        masked: false,
    }
}

/// Argmax decision. Ties resolve toward the highest template index, i.e.
/// toward ending the episode: with no learned preference the policy answers
/// rather than calling tools, which is the untrained-baseline behavior.
pub fn greedy_decision(params: &PolicyParams, features: &StateFeatures) -> DecisionRecord {
    let valid = features.valid;
    if valid.iter().all(|v| !v) {
        return DecisionRecord {
            bucket: features.bucket,
            valid: pack_mask(&[false, false, false, false, false, false, true]),
            chosen: actions::ANSWER_TEMPLATE as u8,
            log_prob: 0.0,
            masked: false,
        };
    }
    let logits = params.logits_at(features.bucket);
    let mut best = usize::MAX;
    let mut best_logit = f64::NEG_INFINITY;
    for i in 0..TEMPLATE_COUNT {
        if valid[i] && logits[i] >= best_logit {
            best = i;
            best_logit = logits[i];
        }
    }
    DecisionRecord {
        bucket: features.bucket,
        valid: pack_mask(&valid),
        chosen: best as u8,
        log_prob: log_prob_of(params, features.bucket, &valid, best),
        masked: false,
    }
}

/// Sum of per-decision log-probabilities over unmasked decisions only.
pub fn trajectory_log_prob(params: &PolicyParams, decisions: &[DecisionRecord]) -> f64 {
    decisions
        .iter()
        .filter(|d| !d.masked)
        .map(|d| log_prob_of(params, d.bucket, &d.valid_mask(), d.chosen as usize))
        .sum()
}

/// Accumulate `weight * ∇ log π(chosen | bucket)` into `grad`. Masked
/// decisions are skipped, which is the loss-masking contract.
pub fn accumulate_log_prob_grad(
    params: &PolicyParams,
    decision: &DecisionRecord,
    weight: f64,
    grad: &mut GradMap,
) {
    if decision.masked {
        return;
    }
    let valid = decision.valid_mask();
    let p = probs(params, decision.bucket, &valid);
    let row = grad.entry(decision.bucket).or_insert([0.0; TEMPLATE_COUNT]);
    for i in 0..TEMPLATE_COUNT {
        if !valid[i] {
            continue;
        }
        let indicator = if i == decision.chosen as usize {
            1.0
        } else {
            0.0
        };
        row[i] += weight * (indicator - p[i]);
    }
}

/// Shannon entropy of the decision distribution at one state.
pub fn entropy_at(params: &PolicyParams, bucket: u16, valid: &[bool; TEMPLATE_COUNT]) -> f64 {
    let p = probs(params, bucket, valid);
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Mean entropy over the supplied feature states.
pub fn policy_entropy(params: &PolicyParams, states: &[(u16, u8)]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let total: f64 = states
        .iter()
        .map(|(bucket, valid)| entropy_at(params, *bucket, &unpack_mask(*valid)))
        .sum();
    total / states.len() as f64
}

/// Exact `KL(p ‖ q)` between the two policies at one state.
pub fn kl_at(
    p_params: &PolicyParams,
    q_params: &PolicyParams,
    bucket: u16,
    valid: &[bool; TEMPLATE_COUNT],
) -> f64 {
    let p = probs(p_params, bucket, valid);
    let q = probs(q_params, bucket, valid);
    let mut kl = 0.0;
    for i in 0..TEMPLATE_COUNT {
        if valid[i] && p[i] > 0.0 {
            kl += p[i] * (p[i].ln() - q[i].ln());
        }
    }
    kl
}

/// Accumulate `weight * ∂KL(π_θ ‖ π_ref)/∂logits` at one state and return
/// the KL value. For a categorical softmax:
/// `∂KL/∂l_j = p_j * ((ln p_j − ln q_j) − KL)`.
pub fn accumulate_kl_grad(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    bucket: u16,
    valid: &[bool; TEMPLATE_COUNT],
    weight: f64,
    grad: &mut GradMap,
) -> f64 {
    let p = probs(params, bucket, valid);
    let q = probs(ref_params, bucket, valid);
    let mut kl = 0.0;
    for i in 0..TEMPLATE_COUNT {
        if valid[i] && p[i] > 0.0 {
            kl += p[i] * (p[i].ln() - q[i].ln());
        }
    }
    let row = grad.entry(bucket).or_insert([0.0; TEMPLATE_COUNT]);
    for i in 0..TEMPLATE_COUNT {
        if valid[i] && p[i] > 0.0 {
            row[i] += weight * p[i] * ((p[i].ln() - q[i].ln()) - kl);
        }
    }
    kl
}

// ---------------------------------------------------------------------------
// Behavior cloning (cold start)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        CloneConfig {
            epochs: 2,
            learning_rate: 0.5,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneReport {
    /// Mean negative log-likelihood over unmasked teacher decisions, measured
    /// after each epoch.
    pub epoch_nll: Vec<f64>,
    pub decisions_used: usize,
    pub warning: Option<String>,
}

fn mean_nll(params: &PolicyParams, decisions: &[&DecisionRecord]) -> f64 {
    if decisions.is_empty() {
        return 0.0;
    }
    let total: f64 = decisions
        .iter()
        .map(|d| -log_prob_of(params, d.bucket, &d.valid_mask(), d.chosen as usize))
        .sum();
    total / decisions.len() as f64
}

/// Gradient ascent on the summed unmasked log-likelihood of teacher
/// decisions. Masked decisions contribute exactly zero gradient.
pub fn behavior_clone(
    params: &PolicyParams,
    teacher_decisions: &[Vec<DecisionRecord>],
    config: &CloneConfig,
) -> (PolicyParams, CloneReport) {
    let mut params = params.clone();
    let flat: Vec<&DecisionRecord> = teacher_decisions
        .iter()
        .flatten()
        .filter(|d| !d.masked)
        .collect();
    if flat.is_empty() {
        return (
            params,
            CloneReport {
                epoch_nll: Vec::new(),
                decisions_used: 0,
                warning: Some("empty teacher dataset; parameters unchanged".to_string()),
            },
        );
    }
    let mut order: Vec<usize> = (0..flat.len()).collect();
    let mut rng = crate::rng::stream(config.seed, &["behavior_clone"]);
    let mut epoch_nll = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grad: GradMap = GradMap::new();
            for &idx in chunk {
                accumulate_log_prob_grad(&params, flat[idx], 1.0, &mut grad);
            }
            apply_grad(
                &mut params,
                &grad,
                config.learning_rate / chunk.len() as f64,
            );
        }
        epoch_nll.push(mean_nll(&params, &flat));
    }
    (
        params,
        CloneReport {
            epoch_nll,
            decisions_used: flat.len(),
            warning: None,
        },
    )
}

/// Fisher-Yates with our seeded stream (keeps shuffles platform-stable).
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
