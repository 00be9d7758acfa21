//! Query synthesis, difficulty scoring, benchmark splits, and cold-start
//! distillation.
//!
//! Intent sets are enumerated combinatorially from the world (ordered city
//! pairs × dates × trip lengths × optional constraint slots), rendered into
//! natural-language queries, sanity-filtered by an exhaustive feasibility
//! witness over the visible candidate pools, then graded easy/medium/hard by
//! repeated sampling with a probe policy. Benchmark cells are filled to the
//! requested counts with ids disjoint from the RL train/validation pools.

use crate::domain::{Difficulty, IntentSet, Query, TransportMode};
use crate::policy::{
    actions, oracle_template, sample_decision, GatheredState, PolicyParams, ScriptedOracle,
    SoftmaxPolicy,
};
use crate::protocol::{
    run_episode, Agent, AgentAction, AgentStep, EpisodeLimits, SandboxEnv, Segment, SegmentKind,
    TrajectoryRecord,
};
use crate::sandbox::{Sandbox, ToolCall, ToolName, WorldState};
use crate::verifier::RewardModel;
use chrono::Days;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationConfig {
    /// Departure-day offsets from the world start date.
    pub date_offsets: Vec<u32>,
    pub trip_lengths: Vec<u32>,
    /// Optional constraint slot values; empty lists disable a slot.
    pub budgets_cents: Vec<i64>,
    pub hotel_preferences: Vec<String>,
    pub mode_preferences: Vec<TransportMode>,
    /// How many destination landmarks to offer as POI requirements.
    pub poi_landmarks_per_destination: usize,
    pub arrival_deadlines: Vec<u16>,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig {
            date_offsets: vec![2, 6, 11],
            trip_lengths: vec![1, 2],
            budgets_cents: vec![],
            hotel_preferences: vec![],
            mode_preferences: vec![],
            poi_landmarks_per_destination: 0,
            arrival_deadlines: vec![],
        }
    }
}

/// Deterministic enumeration of valid intent combinations. Constraint slots
/// multiply the base combinations by `1 + |values|` each (absent plus each
/// value).
pub fn enumerate_intents(world: &WorldState, config: &EnumerationConfig) -> Vec<IntentSet> {
    let mut out = Vec::new();
    let budgets: Vec<Option<i64>> = std::iter::once(None)
        .chain(config.budgets_cents.iter().copied().map(Some))
        .collect();
    let prefs: Vec<Option<String>> = std::iter::once(None)
        .chain(config.hotel_preferences.iter().cloned().map(Some))
        .collect();
    let modes: Vec<Option<TransportMode>> = std::iter::once(None)
        .chain(config.mode_preferences.iter().copied().map(Some))
        .collect();
    let deadlines: Vec<Option<u16>> = std::iter::once(None)
        .chain(config.arrival_deadlines.iter().copied().map(Some))
        .collect();
    for origin in &world.cities {
        for destination in &world.cities {
            if origin.name == destination.name {
                continue;
            }
            let landmarks: Vec<Option<String>> = std::iter::once(None)
                .chain(
                    world
                        .pois
                        .get(&destination.name)
                        .into_iter()
                        .flatten()
                        .filter(|p| p.category == "landmark")
                        .take(config.poi_landmarks_per_destination)
                        .map(|p| Some(p.name.clone())),
                )
                .collect();
            for &offset in &config.date_offsets {
                let depart = world.config.start_date + Days::new(offset as u64);
                for &length in &config.trip_lengths {
                    let ret = depart + Days::new(length as u64);
                    if !world.in_horizon(depart) || !world.in_horizon(ret) {
                        continue;
                    }
                    for budget in &budgets {
                        for pref in &prefs {
                            for mode in &modes {
                                for poi in &landmarks {
                                    for deadline in &deadlines {
                                        out.push(IntentSet {
                                            origin: origin.name.clone(),
                                            destination: destination.name.clone(),
                                            depart_date: depart,
                                            return_date: None,
                                            trip_length_days: Some(length),
                                            arrival_deadline: *deadline,
                                            budget_total: *budget,
                                            hotel_preference: pref.clone(),
                                            transport_mode_preference: *mode,
                                            poi_requirement: poi.clone(),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("invalid intent set: {0}")]
    Invalid(#[from] crate::domain::IntentError),
}

/// Render an intent set into a query (id, text, constrained flag).
pub fn synthesize_query(intents: IntentSet) -> Result<Query, SynthesisError> {
    Ok(Query::from_intents(intents)?)
}

// ---------------------------------------------------------------------------
// Probe policies and difficulty scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbePolicy {
    /// The scripted oracle (an upper bound on competence).
    Oracle,
    /// Uniform-random over valid templates (zero-logit softmax).
    Uniform,
    /// Follows the oracle with probability `oracle_prob`, uniform otherwise.
    Noisy { oracle_prob: f64 },
    /// A trained parameter snapshot.
    Params(PolicyParams),
}

impl Default for ProbePolicy {
    fn default() -> Self {
        ProbePolicy::Noisy { oracle_prob: 0.75 }
    }
}

/// Mixture agent backing [`ProbePolicy::Noisy`].
struct NoisyOracle {
    oracle_prob: f64,
    rng: ChaCha8Rng,
    params: PolicyParams,
    last_template: usize,
}

impl Agent for NoisyOracle {
    fn act(
        &mut self,
        query: &Query,
        segments: &[Segment],
        _turn: usize,
    ) -> Result<AgentStep, String> {
        let state = GatheredState::from_segments(query, segments);
        let features = actions::features(query, &state);
        let decision = if self.rng.gen::<f64>() < self.oracle_prob {
            let mut template = oracle_template(query, &state);
            if !features.valid[template] {
                template = actions::ANSWER_TEMPLATE;
            }
            crate::policy::DecisionRecord {
                bucket: features.bucket,
                valid: crate::policy::pack_mask(&features.valid),
                chosen: template as u8,
                log_prob: 0.0,
                masked: false,
            }
        } else {
            sample_decision(&self.params, &features, &mut self.rng)
        };
        self.last_template = decision.chosen as usize;
        let (thought, action) = actions::bind_template(decision.chosen as usize, query, &state)
            .unwrap_or_else(|| {
                let (_, body) =
                    actions::build_answer(query, &state, actions::AnswerSelector::FirstListed);
                (String::new(), AgentAction::Answer(body))
            });
        Ok(AgentStep {
            thought,
            action,
            decision: Some(decision),
        })
    }
}

fn probe_agent(probe: &ProbePolicy, stream: ChaCha8Rng) -> Box<dyn Agent> {
    match probe {
        ProbePolicy::Oracle => Box::new(ScriptedOracle::new()),
        ProbePolicy::Uniform => Box::new(SoftmaxPolicy::sampler(PolicyParams::default(), stream)),
        ProbePolicy::Noisy { oracle_prob } => Box::new(NoisyOracle {
            oracle_prob: *oracle_prob,
            rng: stream,
            params: PolicyParams::default(),
            last_template: actions::ANSWER_TEMPLATE,
        }),
        ProbePolicy::Params(params) => Box::new(SoftmaxPolicy::sampler(params.clone(), stream)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifficultyThresholds {
    /// Pass fraction at or above which a query is easy.
    pub easy_floor: f64,
    /// Pass fraction below which a query is hard.
    pub hard_ceiling: f64,
}

impl Default for DifficultyThresholds {
    fn default() -> Self {
        DifficultyThresholds {
            easy_floor: 2.0 / 3.0,
            hard_ceiling: 1.0 / 3.0,
        }
    }
}

/// Grade one query by running `k` stochastic probe episodes and thresholding
/// the pass fraction. Boundaries go to the easier class.
#[allow(clippy::too_many_arguments)]
pub fn score_difficulty(
    query: &Query,
    probe: &ProbePolicy,
    k: usize,
    sandbox: &Sandbox,
    verifier: &dyn RewardModel,
    limits: &EpisodeLimits,
    thresholds: DifficultyThresholds,
    seed: u64,
) -> Difficulty {
    let k = k.max(1);
    let passes: usize = (0..k)
        .map(|i| {
            let stream = crate::rng::stream(seed, &["probe", &query.id, &i.to_string()]);
            let mut agent = probe_agent(probe, stream);
            let mut env = SandboxEnv { sandbox };
            let trajectory = run_episode(agent.as_mut(), &mut env, query, limits);
            usize::from(verifier.joint_reward(query, &trajectory).r == 1)
        })
        .sum();
    let p = passes as f64 / k as f64;
    if p >= thresholds.easy_floor {
        Difficulty::Easy
    } else if p >= thresholds.hard_ceiling {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

// ---------------------------------------------------------------------------
// Feasibility witness
// ---------------------------------------------------------------------------

/// Simulate the standard gather calls and return the state the answer
/// builder would see. Used by the witness so feasibility is judged over the
/// same capped pools a policy can act on.
pub fn gather_candidates(sandbox: &Sandbox, query: &Query) -> GatheredState {
    let intents = &query.intents;
    let mut segments = Vec::new();
    let push_call = |call: ToolCall, segments: &mut Vec<Segment>| {
        let (_, body) = sandbox.call(&call);
        let turn = segments.len() / 2;
        segments.push(Segment {
            kind: SegmentKind::ToolCall,
            body: call.render(),
            turn_index: turn,
        });
        segments.push(Segment {
            kind: SegmentKind::ToolResponse,
            body,
            turn_index: turn,
        });
    };
    let depart = intents.depart_date.to_string();
    for tool in [ToolName::FlightSearch, ToolName::TrainSearch] {
        push_call(
            ToolCall::new(tool, &[&intents.origin, &intents.destination, &depart]),
            &mut segments,
        );
    }
    if let Some(ret) = intents.effective_return_date() {
        let ret = ret.to_string();
        for tool in [ToolName::FlightSearch, ToolName::TrainSearch] {
            push_call(
                ToolCall::new(tool, &[&intents.destination, &intents.origin, &ret]),
                &mut segments,
            );
        }
        if intents.nights() >= 1 {
            push_call(
                ToolCall::new(
                    ToolName::HotelSearch,
                    &[&intents.destination, &depart, &ret],
                ),
                &mut segments,
            );
        }
    }
    let poi_query = intents.poi_requirement.clone().unwrap_or_default();
    push_call(
        ToolCall::new(ToolName::PoiSearch, &[&poi_query, &intents.destination]),
        &mut segments,
    );
    GatheredState::from_segments(query, &segments)
}

/// Exhaustive search over the visible pools for one combination that meets
/// every hard constraint. Judged over the same capped candidate pools the
/// answer builder can act on, so "feasible" always means "solvable".
pub fn feasibility_witness(sandbox: &Sandbox, query: &Query) -> bool {
    let state = gather_candidates(sandbox, query);
    actions::satisfying_combo_exists(query, &state)
}

// ---------------------------------------------------------------------------
// Benchmark construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub constrained: bool,
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl SplitSpec {
    pub fn count(&self, difficulty: Difficulty) -> usize {
        match difficulty {
            Difficulty::Easy => self.easy,
            Difficulty::Medium => self.medium,
            Difficulty::Hard => self.hard,
            Difficulty::Unrated => 0,
        }
    }
}

/// Manual override lists applied after the automated sanity filter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    /// Query ids admitted even when the witness finds no feasible combo.
    pub allow: Vec<String>,
    /// Query ids removed regardless of the witness.
    pub deny: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataGenConfig {
    pub enumeration: EnumerationConfig,
    pub probe: ProbePolicy,
    /// Repeated samples per query for difficulty scoring.
    pub probe_samples: usize,
    pub thresholds: DifficultyThresholds,
    pub train_count: usize,
    pub val_count: usize,
    /// Queries set aside for cold-start distillation, taken after the
    /// benchmark/train/validation allocation (best effort).
    pub teacher_count: usize,
    /// Deterministic stride-subsample caps applied per class before the
    /// witness; the constraint product can dwarf the unconstrained pool.
    pub max_constrained_pool: Option<usize>,
    pub max_unconstrained_pool: Option<usize>,
    pub seed: u64,
    pub limits: EpisodeLimits,
    pub overrides: Overrides,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            enumeration: EnumerationConfig::default(),
            probe: ProbePolicy::default(),
            probe_samples: 8,
            thresholds: DifficultyThresholds::default(),
            train_count: 450,
            val_count: 50,
            teacher_count: 1000,
            max_constrained_pool: None,
            max_unconstrained_pool: None,
            seed: 0,
            limits: EpisodeLimits::default(),
            overrides: Overrides::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataGenError {
    #[error("duplicate split name: {0}")]
    DuplicateSplit(String),
    #[error("insufficient query pool; deficient cells: {0}")]
    InsufficientPool(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub world_seed: u64,
    pub world_digest: String,
    pub config_digest: String,
    pub pool_size: usize,
    pub filtered_out: usize,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug)]
pub struct GeneratedData {
    pub splits: Vec<(SplitSpec, Vec<Query>)>,
    pub train: Vec<Query>,
    pub validation: Vec<Query>,
    /// Cold-start distillation pool, disjoint from everything above.
    pub teacher: Vec<Query>,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Full pipeline: enumerate, synthesize, sanity-filter, grade, allocate.
/// Benchmark splits, train, and validation pools are pairwise id-disjoint.
pub fn gen_data(
    sandbox: &Sandbox,
    splits: &[SplitSpec],
    config: &DataGenConfig,
) -> Result<GeneratedData, DataGenError> {
    for (i, split) in splits.iter().enumerate() {
        if splits[..i].iter().any(|s| s.name == split.name) {
            return Err(DataGenError::DuplicateSplit(split.name.clone()));
        }
    }

    let intent_sets = enumerate_intents(sandbox.world(), &config.enumeration);
    let mut pool: Vec<Query> = Vec::with_capacity(intent_sets.len());
    let mut seen = std::collections::BTreeSet::new();
    for intents in intent_sets {
        if let Ok(query) = synthesize_query(intents) {
            if seen.insert(query.id.clone()) {
                pool.push(query);
            }
        }
    }
    let stride_cap = |queries: Vec<Query>, cap: Option<usize>| -> Vec<Query> {
        match cap {
            Some(cap) if queries.len() > cap => {
                let stride = queries.len().div_ceil(cap);
                queries.into_iter().step_by(stride).take(cap).collect()
            }
            _ => queries,
        }
    };
    let (constrained, unconstrained): (Vec<Query>, Vec<Query>) =
        pool.into_iter().partition(|q| q.constrained);
    let mut pool = stride_cap(unconstrained, config.max_unconstrained_pool);
    pool.extend(stride_cap(constrained, config.max_constrained_pool));
    let pool_size = pool.len();

    // Automated sanity filter with manual overrides.
    let verifier = crate::verifier::RuleVerifier::default();
    let witness_flags: Vec<bool> = pool
        .par_iter()
        .map(|q| feasibility_witness(sandbox, q))
        .collect();
    let mut filtered: Vec<Query> = pool
        .into_iter()
        .zip(witness_flags)
        .filter(|(q, feasible)| {
            !config.overrides.deny.contains(&q.id)
                && (*feasible || config.overrides.allow.contains(&q.id))
        })
        .map(|(q, _)| q)
        .collect();
    let filtered_out = pool_size - filtered.len();

    // Difficulty scoring (embarrassingly parallel per query).
    let difficulties: Vec<Difficulty> = filtered
        .par_iter()
        .map(|query| {
            score_difficulty(
                query,
                &config.probe,
                config.probe_samples,
                sandbox,
                &verifier,
                &config.limits,
                config.thresholds,
                config.seed,
            )
        })
        .collect();
    for (query, difficulty) in filtered.iter_mut().zip(&difficulties) {
        query.difficulty = *difficulty;
    }

    // Allocation: benchmark cells first, then train/validation from the
    // remainder; every query lands in at most one output.
    let mut assigned: Vec<bool> = vec![false; filtered.len()];
    let mut splits_out: Vec<(SplitSpec, Vec<Query>)> = Vec::new();
    let mut deficits: Vec<String> = Vec::new();
    for split in splits {
        let mut members: Vec<Query> = Vec::new();
        for difficulty in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
            let need = split.count(difficulty);
            let mut got = 0usize;
            for (i, query) in filtered.iter().enumerate() {
                if got == need {
                    break;
                }
                if assigned[i]
                    || query.constrained != split.constrained
                    || query.difficulty != difficulty
                {
                    continue;
                }
                assigned[i] = true;
                members.push(query.clone());
                got += 1;
            }
            if got < need {
                deficits.push(format!(
                    "{}/{}: need {need}, found {got}",
                    split.name, difficulty
                ));
            }
        }
        splits_out.push((split.clone(), members));
    }
    if !deficits.is_empty() {
        return Err(DataGenError::InsufficientPool(deficits.join("; ")));
    }

    // The pool lists unconstrained queries first, so leftovers are
    // interleaved by class to give the RL and teacher pools coverage of
    // both constrained and unconstrained requests.
    let mut leftover_unconstrained = Vec::new();
    let mut leftover_constrained = Vec::new();
    for (i, query) in filtered.iter().enumerate() {
        if assigned[i] {
            continue;
        }
        if query.constrained {
            leftover_constrained.push(query);
        } else {
            leftover_unconstrained.push(query);
        }
    }
    let mut leftovers = Vec::with_capacity(leftover_unconstrained.len() + leftover_constrained.len());
    let mut a = leftover_unconstrained.into_iter();
    let mut b = leftover_constrained.into_iter();
    loop {
        match (a.next(), b.next()) {
            (None, None) => break,
            (x, y) => {
                leftovers.extend(x);
                leftovers.extend(y);
            }
        }
    }
    let mut train = Vec::with_capacity(config.train_count);
    let mut validation = Vec::with_capacity(config.val_count);
    let mut teacher = Vec::new();
    for query in leftovers {
        if train.len() < config.train_count {
            train.push(query.clone());
        } else if validation.len() < config.val_count {
            validation.push(query.clone());
        } else if teacher.len() < config.teacher_count {
            teacher.push(query.clone());
        } else {
            break;
        }
    }
    if train.len() < config.train_count || validation.len() < config.val_count {
        return Err(DataGenError::InsufficientPool(format!(
            "train/validation: need {}+{}, found {}+{}",
            config.train_count,
            config.val_count,
            train.len(),
            validation.len()
        )));
    }

    let config_digest = sha256_hex(
        serde_json::to_string(&(config, splits))
            .expect("config serializes")
            .as_bytes(),
    );
    let mut counts = BTreeMap::new();
    for (spec, members) in &splits_out {
        counts.insert(spec.name.clone(), members.len());
    }
    counts.insert("train".into(), train.len());
    counts.insert("validation".into(), validation.len());
    counts.insert("teacher".into(), teacher.len());
    let manifest = Manifest {
        format_version: 1,
        world_seed: sandbox.world().seed,
        world_digest: crate::sandbox::world_digest(sandbox.world()),
        config_digest,
        pool_size,
        filtered_out,
        counts,
    };
    Ok(GeneratedData {
        splits: splits_out,
        train,
        validation,
        teacher,
        manifest,
    })
}

/// Write benchmark splits, train/validation pools, and the manifest under
/// one directory.
pub fn write_generated_data(dir: &Path, data: &GeneratedData) -> Result<(), DataGenError> {
    let io = |e: crate::jsonl::JsonlError| DataGenError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(|e| DataGenError::Io(e.to_string()))?;
    for (spec, members) in &data.splits {
        crate::jsonl::write_jsonl(&dir.join(format!("{}.jsonl", spec.name)), members)
            .map_err(io)?;
    }
    crate::jsonl::write_jsonl(&dir.join("train.jsonl"), &data.train).map_err(io)?;
    crate::jsonl::write_jsonl(&dir.join("validation.jsonl"), &data.validation).map_err(io)?;
    crate::jsonl::write_jsonl(&dir.join("teacher_queries.jsonl"), &data.teacher).map_err(io)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&data.manifest).expect("manifest serializes"),
    )
    .map_err(|e| DataGenError::Io(e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Cold-start distillation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DistillStats {
    pub attempted: usize,
    pub kept: usize,
    pub rejected_format: usize,
    pub rejected_reward: usize,
}

/// Run the scripted oracle over the queries and keep only trajectories that
/// survive both the strict format check and the full reward verifier.
pub fn distill_cold_start(
    queries: &[Query],
    sandbox: &Sandbox,
    verifier: &dyn RewardModel,
    limits: &EpisodeLimits,
) -> (Vec<TrajectoryRecord>, DistillStats) {
    let results: Vec<(Option<TrajectoryRecord>, bool, bool)> = queries
        .par_iter()
        .map(|query| {
            let mut oracle = ScriptedOracle::new();
            let mut env = SandboxEnv { sandbox };
            let trajectory = run_episode(&mut oracle, &mut env, query, limits);
            let format_ok = crate::protocol::validate_format(&trajectory).ok;
            let record = verifier.joint_reward(query, &trajectory);
            let reward_ok = record.r == 1;
            if format_ok && reward_ok {
                let persisted = TrajectoryRecord::from_trajectory(
                    &trajectory,
                    Some(record.r),
                    Some(format!("{:?}", record.trajectory_verdict.conclusion)),
                )
                .ok();
                (persisted, format_ok, reward_ok)
            } else {
                (None, format_ok, reward_ok)
            }
        })
        .collect();
    let mut kept = Vec::new();
    let mut rejected_format = 0;
    let mut rejected_reward = 0;
    for (record, format_ok, reward_ok) in results {
        match record {
            Some(r) => kept.push(r),
            None => {
                if !format_ok {
                    rejected_format += 1;
                } else if !reward_ok {
                    rejected_reward += 1;
                }
            }
        }
    }
    let stats = DistillStats {
        attempted: queries.len(),
        kept: kept.len(),
        rejected_format,
        rejected_reward,
    };
    (kept, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{generate_world, WorldConfig};

    fn sandbox(cities: usize) -> Sandbox {
        let config = WorldConfig {
            cities,
            days: 20,
            ..WorldConfig::default()
        };
        Sandbox::new(generate_world(33, &config).unwrap())
    }

    #[test]
    fn two_cities_one_date_yields_two_base_combinations() {
        let sandbox = sandbox(2);
        let config = EnumerationConfig {
            date_offsets: vec![2],
            trip_lengths: vec![1],
            ..EnumerationConfig::default()
        };
        let sets = enumerate_intents(sandbox.world(), &config);
        assert_eq!(sets.len(), 2);
    }

    #[test]
    fn budget_slot_multiplies_by_absent_plus_values() {
        let sandbox = sandbox(2);
        let base = EnumerationConfig {
            date_offsets: vec![2],
            trip_lengths: vec![1],
            ..EnumerationConfig::default()
        };
        let with_budget = EnumerationConfig {
            budgets_cents: vec![100_000, 200_000, 400_000],
            ..base.clone()
        };
        let n_base = enumerate_intents(sandbox.world(), &base).len();
        let n_budget = enumerate_intents(sandbox.world(), &with_budget).len();
        assert_eq!(n_budget, n_base * 4);
    }

    #[test]
    fn every_enumerated_set_passes_query_invariants() {
        let sandbox = sandbox(3);
        let config = EnumerationConfig {
            date_offsets: vec![2, 6],
            trip_lengths: vec![1, 2],
            budgets_cents: vec![150_000],
            mode_preferences: vec![TransportMode::Train],
            poi_landmarks_per_destination: 1,
            ..EnumerationConfig::default()
        };
        for intents in enumerate_intents(sandbox.world(), &config) {
            let query = synthesize_query(intents).expect("valid query");
            assert!(!query.id.is_empty());
            assert_eq!(
                query.constrained,
                query.intents.is_constrained(),
                "constrained flag mismatch"
            );
        }
    }

    #[test]
    fn constrained_flag_follows_slots() {
        let sandbox = sandbox(2);
        let config = EnumerationConfig {
            date_offsets: vec![2],
            trip_lengths: vec![1],
            budgets_cents: vec![150_000],
            ..EnumerationConfig::default()
        };
        let queries: Vec<Query> = enumerate_intents(sandbox.world(), &config)
            .into_iter()
            .map(|i| synthesize_query(i).unwrap())
            .collect();
        assert!(queries.iter().any(|q| q.constrained));
        assert!(queries.iter().any(|q| !q.constrained));
        for q in &queries {
            if q.constrained {
                assert!(q.text.contains("CNY"));
            }
        }
    }

    #[test]
    fn oracle_probe_grades_feasible_query_easy() {
        let sandbox = sandbox(3);
        let config = EnumerationConfig {
            date_offsets: vec![2],
            trip_lengths: vec![1],
            ..EnumerationConfig::default()
        };
        let verifier = crate::verifier::RuleVerifier::default();
        let query = enumerate_intents(sandbox.world(), &config)
            .into_iter()
            .map(|i| synthesize_query(i).unwrap())
            .find(|q| feasibility_witness(&sandbox, q))
            .expect("some feasible query");
        let difficulty = score_difficulty(
            &query,
            &ProbePolicy::Oracle,
            4,
            &sandbox,
            &verifier,
            &EpisodeLimits::default(),
            DifficultyThresholds::default(),
            1,
        );
        assert_eq!(difficulty, Difficulty::Easy);
    }

    #[test]
    fn impossible_budget_grades_hard() {
        let sandbox = sandbox(3);
        let verifier = crate::verifier::RuleVerifier::default();
        let mut intents = enumerate_intents(
            sandbox.world(),
            &EnumerationConfig {
                date_offsets: vec![2],
                trip_lengths: vec![1],
                ..EnumerationConfig::default()
            },
        )
        .into_iter()
        .next()
        .unwrap();
        intents.budget_total = Some(1); // nothing costs one cent
        let query = synthesize_query(intents).unwrap();
        assert!(!feasibility_witness(&sandbox, &query));
        let difficulty = score_difficulty(
            &query,
            &ProbePolicy::Oracle,
            4,
            &sandbox,
            &verifier,
            &EpisodeLimits::default(),
            DifficultyThresholds::default(),
            1,
        );
        assert_eq!(difficulty, Difficulty::Hard);
    }

    #[test]
    fn difficulty_monotone_in_probe_strength() {
        let sandbox = sandbox(3);
        let verifier = crate::verifier::RuleVerifier::default();
        let config = EnumerationConfig {
            date_offsets: vec![2],
            trip_lengths: vec![1],
            budgets_cents: vec![250_000],
            ..EnumerationConfig::default()
        };
        let queries: Vec<Query> = enumerate_intents(sandbox.world(), &config)
            .into_iter()
            .map(|i| synthesize_query(i).unwrap())
            .filter(|q| feasibility_witness(&sandbox, q))
            .collect();
        let count_hard = |probe: &ProbePolicy| {
            queries
                .iter()
                .filter(|q| {
                    score_difficulty(
                        q,
                        probe,
                        6,
                        &sandbox,
                        &verifier,
                        &EpisodeLimits::default(),
                        DifficultyThresholds::default(),
                        2,
                    ) == Difficulty::Hard
                })
                .count()
        };
        let hard_oracle = count_hard(&ProbePolicy::Oracle);
        let hard_uniform = count_hard(&ProbePolicy::Uniform);
        assert!(
            hard_oracle <= hard_uniform,
            "oracle probe labeled more queries hard ({hard_oracle}) than uniform ({hard_uniform})"
        );
    }

    #[test]
    fn distilled_traces_replay_to_reward_one() {
        let sandbox = sandbox(3);
        let verifier = crate::verifier::RuleVerifier::default();
        let config = EnumerationConfig {
            date_offsets: vec![2, 6],
            trip_lengths: vec![1],
            ..EnumerationConfig::default()
        };
        let queries: Vec<Query> = enumerate_intents(sandbox.world(), &config)
            .into_iter()
            .map(|i| synthesize_query(i).unwrap())
            .filter(|q| feasibility_witness(&sandbox, q))
            .take(6)
            .collect();
        assert!(!queries.is_empty());
        let (records, stats) =
            distill_cold_start(&queries, &sandbox, &verifier, &EpisodeLimits::default());
        assert_eq!(stats.kept, records.len());
        assert!(stats.kept > 0, "witness-feasible queries should distill");
        let by_id: BTreeMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
        for record in &records {
            let trajectory = record.to_trajectory();
            assert!(crate::protocol::validate_format(&trajectory).ok);
            let replay = verifier.joint_reward(by_id[record.query_id.as_str()], &trajectory);
            assert_eq!(replay.r, 1, "distilled trace must re-verify to r=1");
        }
    }

    #[test]
    fn duplicate_split_names_rejected() {
        let sandbox = sandbox(2);
        let spec = SplitSpec {
            name: "x".into(),
            constrained: false,
            easy: 0,
            medium: 0,
            hard: 0,
        };
        let err = gen_data(&sandbox, &[spec.clone(), spec], &DataGenConfig::default());
        assert!(matches!(err, Err(DataGenError::DuplicateSplit(_))));
    }
}
