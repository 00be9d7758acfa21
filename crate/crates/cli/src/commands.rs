//! Command implementations.

use crate::config::TrainFileConfig;
use crate::{Ablation, EvalArgs, GenDataArgs, GenWorldArgs, InspectArgs, TrainArgs};
use anyhow::{bail, Context, Result};
use deeptravel_core::datagen::{
    distill_cold_start, gen_data as generate_data, write_generated_data, DataGenConfig,
    EnumerationConfig, Overrides, ProbePolicy, SplitSpec,
};
use deeptravel_core::domain::{Difficulty, Query, TransportMode};
use deeptravel_core::jsonl;
use deeptravel_core::policy::{behavior_clone, PolicyParams, TEMPLATE_KINDS};
use deeptravel_core::protocol::{EpisodeLimits, TrajectoryRecord};
use deeptravel_core::sandbox::{generate_world, load_world, save_world, Sandbox, WorldConfig};
use deeptravel_core::trainer::{
    evaluate, train as run_training, write_metrics_csv, write_metrics_jsonl, Checkpoint,
};
use deeptravel_core::verifier::{RewardModel, RuleVerifier, VerifierConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

fn usage(message: impl AsRef<str>) -> Result<ExitCode> {
    eprintln!("usage error: {}", message.as_ref());
    Ok(ExitCode::from(2))
}

fn env_seed(default: u64) -> Result<u64> {
    match std::env::var("DEEPTRAVEL_SEED") {
        Ok(value) => value
            .parse()
            .context("DEEPTRAVEL_SEED must be an unsigned integer"),
        Err(_) => Ok(default),
    }
}

fn load_sandbox(path: &Path) -> Result<Sandbox> {
    let world = load_world(path).with_context(|| format!("loading world {}", path.display()))?;
    Ok(Sandbox::new(world))
}

fn parse_hhmm(raw: &str) -> Result<u16> {
    let (h, m) = raw
        .split_once(':')
        .with_context(|| format!("bad time {raw:?}, want HH:MM"))?;
    let hours: u16 = h.parse().with_context(|| format!("bad time {raw:?}"))?;
    let minutes: u16 = m.parse().with_context(|| format!("bad time {raw:?}"))?;
    if hours >= 24 || minutes >= 60 {
        bail!("bad time {raw:?}");
    }
    Ok(hours * 60 + minutes)
}

// ---------------------------------------------------------------------------
// gen-world
// ---------------------------------------------------------------------------

pub fn gen_world(args: GenWorldArgs) -> Result<ExitCode> {
    let seed = env_seed(args.seed)?;
    let mut config = WorldConfig {
        cities: args.cities,
        days: args.days,
        flight_link_prob: args.flight_link_prob,
        train_link_prob: args.train_link_prob,
        sold_out_rate: args.sold_out_rate,
        ..WorldConfig::default()
    };
    if let Some(start) = args.start_date {
        config.start_date = start;
    }
    let world = generate_world(seed, &config).context("generating world")?;
    let digest =
        save_world(&world, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "world seed {seed}: {} cities, {} days",
        config.cities, config.days
    );
    println!("digest {digest}");
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

fn parse_splits(raw: &str) -> Result<Option<Vec<SplitSpec>>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let mut specs: Vec<SplitSpec> = Vec::new();
    for part in raw.split(',') {
        let (name, rest) = part
            .split_once('=')
            .ok_or_else(|| format!("split {part:?}: want name=class:easy/medium/hard"))?;
        let (class, counts) = rest
            .split_once(':')
            .ok_or_else(|| format!("split {part:?}: want name=class:easy/medium/hard"))?;
        let constrained = match class {
            "constrained" => true,
            "unconstrained" => false,
            other => return Err(format!("split {name}: unknown class {other:?}")),
        };
        let counts: Vec<usize> = counts
            .split('/')
            .map(|c| {
                c.parse()
                    .map_err(|_| format!("split {name}: bad count {c:?}"))
            })
            .collect::<Result<_, _>>()?;
        if counts.len() != 3 {
            return Err(format!("split {name}: want easy/medium/hard counts"));
        }
        if specs.iter().any(|s| s.name == name) {
            return Err(format!("duplicate split name: {name}"));
        }
        specs.push(SplitSpec {
            name: name.to_string(),
            constrained,
            easy: counts[0],
            medium: counts[1],
            hard: counts[2],
        });
    }
    Ok(Some(specs))
}

fn parse_probe(raw: &str) -> Result<ProbePolicy> {
    match raw {
        "oracle" => Ok(ProbePolicy::Oracle),
        "uniform" => Ok(ProbePolicy::Uniform),
        other => {
            if let Some(prob) = other.strip_prefix("noisy:") {
                let oracle_prob: f64 =
                    prob.parse().with_context(|| format!("bad probe {raw:?}"))?;
                if !(0.0..=1.0).contains(&oracle_prob) {
                    bail!("probe oracle_prob must lie in [0,1]");
                }
                Ok(ProbePolicy::Noisy { oracle_prob })
            } else if let Some(path) = other.strip_prefix("params:") {
                let params = PolicyParams::load(Path::new(path))
                    .map_err(|e| anyhow::anyhow!("loading probe params: {e}"))?;
                Ok(ProbePolicy::Params(params))
            } else {
                bail!("unknown probe {raw:?}; want oracle|uniform|noisy:<p>|params:<file>")
            }
        }
    }
}

pub fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let splits = match parse_splits(&args.splits) {
        Ok(splits) => splits,
        Err(message) => return usage(message),
    };
    let Some(splits) = splits else {
        println!("empty split spec; nothing to generate");
        return Ok(ExitCode::SUCCESS);
    };

    let sandbox = load_sandbox(&args.world)?;
    let mode_prefs: Vec<TransportMode> = args
        .mode_prefs
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| match m.as_str() {
            "flight" => Ok(TransportMode::Flight),
            "train" => Ok(TransportMode::Train),
            other => Err(anyhow::anyhow!("unknown transport mode {other:?}")),
        })
        .collect::<Result<_>>()?;
    let deadlines: Vec<u16> = args
        .deadlines
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| parse_hhmm(d))
        .collect::<Result<_>>()?;
    let overrides: Overrides = match &args.overrides {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading overrides {}", path.display()))?;
            serde_json::from_str(&text).context("parsing overrides file")?
        }
        None => Overrides::default(),
    };

    let config = DataGenConfig {
        enumeration: EnumerationConfig {
            date_offsets: args.date_offsets.clone(),
            trip_lengths: args.trip_lengths.clone(),
            budgets_cents: args.budgets_yuan.iter().map(|y| y * 100).collect(),
            hotel_preferences: args
                .hotel_prefs
                .iter()
                .filter(|p| !p.is_empty())
                .cloned()
                .collect(),
            mode_preferences: mode_prefs,
            poi_landmarks_per_destination: args.poi_landmarks,
            arrival_deadlines: deadlines,
        },
        probe: parse_probe(&args.probe)?,
        probe_samples: args.probe_samples,
        train_count: args.train_count,
        val_count: args.val_count,
        teacher_count: args.teacher_count,
        max_constrained_pool: args.max_constrained_pool,
        max_unconstrained_pool: args.max_unconstrained_pool,
        seed: args.seed,
        overrides,
        ..DataGenConfig::default()
    };

    let data = generate_data(&sandbox, &splits, &config).context("generating data")?;
    write_generated_data(&args.out_dir, &data).context("writing outputs")?;
    for (spec, members) in &data.splits {
        println!(
            "split {}: {} queries ({}/{}/{} easy/medium/hard)",
            spec.name,
            members.len(),
            spec.easy,
            spec.medium,
            spec.hard
        );
    }
    println!(
        "train {} / validation {} / teacher pool {}",
        data.train.len(),
        data.validation.len(),
        data.teacher.len()
    );

    if !args.skip_distill && !data.teacher.is_empty() {
        let verifier = RuleVerifier::default();
        let (records, stats) = distill_cold_start(
            &data.teacher,
            &sandbox,
            &verifier,
            &EpisodeLimits::default(),
        );
        jsonl::write_jsonl(&args.out_dir.join("teacher.jsonl"), &records)
            .context("writing teacher trajectories")?;
        println!(
            "distilled {} verified teacher trajectories ({} attempted, {} rejected by format, {} by reward)",
            stats.kept, stats.attempted, stats.rejected_format, stats.rejected_reward
        );
    }
    println!("manifest {}", args.out_dir.join("manifest.json").display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let config = TrainFileConfig::load(args.config.as_deref(), &args.overrides)?;
    let sandbox = load_sandbox(&args.world)?;
    let dataset: Vec<Query> = jsonl::read_jsonl(&args.data)
        .with_context(|| format!("loading queries {}", args.data.display()))?;
    if dataset.is_empty() {
        bail!("training dataset {} is empty", args.data.display());
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    // Cold start, unless ablated away.
    let mut params = PolicyParams::default();
    match (&args.cold_start, args.ablation) {
        (Some(_), Ablation::NoCs) => {
            println!("ablation no-cs: skipping behavior cloning");
        }
        (Some(path), _) => {
            let records: Vec<TrajectoryRecord> = jsonl::read_jsonl(path)
                .with_context(|| format!("loading teacher data {}", path.display()))?;
            let decisions: Vec<_> = records.iter().map(|r| r.decisions.clone()).collect();
            let (cloned, report) = behavior_clone(&params, &decisions, &config.clone_config());
            params = cloned;
            match report.warning {
                Some(warning) => println!("cold start: {warning}"),
                None => println!(
                    "cold start: cloned {} decisions over {} epochs (final NLL {:.4})",
                    report.decisions_used,
                    report.epoch_nll.len(),
                    report.epoch_nll.last().copied().unwrap_or(0.0)
                ),
            }
        }
        (None, _) => {}
    }

    let verifier = RuleVerifier::new(VerifierConfig {
        force_trajectory_pass: args.ablation == Ablation::NoTraj,
        force_turn_pass: args.ablation == Ablation::NoTurn,
        ..VerifierConfig::default()
    });
    let trainer_config = config.trainer_config(args.ablation != Ablation::NoEr);
    let resume = match &args.resume {
        Some(path) => {
            Some(Checkpoint::load(path).map_err(|e| anyhow::anyhow!("loading checkpoint: {e}"))?)
        }
        None => None,
    };

    let outcome = run_training(
        &trainer_config,
        &dataset,
        &sandbox,
        &verifier,
        params,
        resume,
        Some(&args.out),
    )
    .context("training")?;

    write_metrics_jsonl(&args.out.join("metrics.jsonl"), &outcome.metrics)
        .context("writing metrics.jsonl")?;
    write_metrics_csv(&args.out.join("metrics.csv"), &outcome.metrics)
        .context("writing metrics.csv")?;
    outcome
        .params
        .save(&args.out.join("params.json"))
        .context("writing params.json")?;

    if let Some(last) = outcome.metrics.last() {
        println!(
            "finished step {}: mean reward {:.3}, entropy {:.3}, keep rate {:.2}, buffer {}",
            last.step,
            last.mean_reward,
            last.policy_entropy,
            last.sample_keep_rate,
            last.buffer_size
        );
    }
    println!("params {}", args.out.join("params.json").display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, Serialize)]
struct Cell {
    passed: usize,
    total: usize,
    pass_rate: f64,
}

impl Cell {
    fn add(&mut self, reward: u8) {
        self.total += 1;
        self.passed += usize::from(reward == 1);
        self.pass_rate = self.passed as f64 / self.total as f64 * 100.0;
    }
}

#[derive(Debug, Serialize)]
struct EvalReport {
    overall: Cell,
    without_constraint: BTreeMap<String, Cell>,
    with_constraint: BTreeMap<String, Cell>,
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let sandbox = load_sandbox(&args.world)?;
    let params =
        PolicyParams::load(&args.params).map_err(|e| anyhow::anyhow!("loading params: {e}"))?;
    let mut queries: Vec<Query> = Vec::new();
    for path in &args.benchmark {
        let mut batch: Vec<Query> = jsonl::read_jsonl(path)
            .with_context(|| format!("loading benchmark {}", path.display()))?;
        if batch.is_empty() {
            bail!("benchmark {} contains no queries", path.display());
        }
        queries.append(&mut batch);
    }

    let verifier = RuleVerifier::default();
    let limits = EpisodeLimits {
        max_turns: args.max_turns,
        ..EpisodeLimits::default()
    };
    let outcome = evaluate(&params, &sandbox, &verifier, &queries, &limits);

    let by_id: BTreeMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut overall = Cell::default();
    let mut without: BTreeMap<String, Cell> = BTreeMap::new();
    let mut with: BTreeMap<String, Cell> = BTreeMap::new();
    for (query_id, reward) in &outcome.per_query {
        let query = by_id[query_id.as_str()];
        overall.add(*reward);
        let table = if query.constrained {
            &mut with
        } else {
            &mut without
        };
        table
            .entry(query.difficulty.to_string())
            .or_default()
            .add(*reward);
        table
            .entry("aggregate".to_string())
            .or_default()
            .add(*reward);
    }

    println!("final pass rate (%)");
    for (label, table) in [("without constraint", &without), ("with constraint", &with)] {
        if table.is_empty() {
            continue;
        }
        print!("  {label}:");
        for difficulty in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
            if let Some(cell) = table.get(&difficulty.to_string()) {
                print!(
                    " {difficulty} {:.2} ({}/{})",
                    cell.pass_rate, cell.passed, cell.total
                );
            }
        }
        if let Some(aggregate) = table.get("aggregate") {
            print!(" | aggregate {:.2}", aggregate.pass_rate);
        }
        println!();
    }
    println!(
        "  overall: {:.2} ({}/{})",
        overall.pass_rate, overall.passed, overall.total
    );

    if let Some(path) = &args.report {
        let report = EvalReport {
            overall,
            without_constraint: without,
            with_constraint: with,
        };
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing report {}", path.display()))?;
        println!("report {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

fn truncate(body: &str, full: bool) -> String {
    const LIMIT: usize = 160;
    if full || body.len() <= LIMIT {
        return body.to_string();
    }
    let mut cut = LIMIT;
    while !body.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}… ({} bytes)", &body[..cut], body.len())
}

pub fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let records: Vec<TrajectoryRecord> = jsonl::read_jsonl(&args.trajectory)
        .with_context(|| format!("loading trajectories {}", args.trajectory.display()))?;
    let Some(record) = records.get(args.index) else {
        bail!(
            "index {} out of range; file holds {} trajectories",
            args.index,
            records.len()
        );
    };
    let trajectory = record.to_trajectory();

    println!("query {} | terminal {:?}", record.query_id, record.terminal);
    if let (Some(reward), Some(conclusion)) = (record.reward, &record.conclusion) {
        println!("stored reward {reward} | conclusion {conclusion}");
    }
    println!("-- segments ({}) --", trajectory.segments.len());
    for segment in &trajectory.segments {
        println!(
            "  [turn {}] {:<24} {}",
            segment.turn_index,
            format!("<{}>", segment.kind.tag()),
            truncate(&segment.body, args.full)
        );
    }
    println!("-- decisions ({}) --", record.decisions.len());
    for decision in &record.decisions {
        let template = TEMPLATE_KINDS
            .get(decision.chosen as usize)
            .map(|k| format!("{k:?}"))
            .unwrap_or_else(|| format!("#{}", decision.chosen));
        println!(
            "  bucket {:>3} {} log_prob {:+.4}{}",
            decision.bucket,
            template,
            decision.log_prob,
            if decision.masked { " [masked]" } else { "" }
        );
    }

    if let Some(queries_path) = &args.queries {
        let queries: Vec<Query> = jsonl::read_jsonl(queries_path)
            .with_context(|| format!("loading queries {}", queries_path.display()))?;
        match queries.iter().find(|q| q.id == record.query_id) {
            Some(query) => {
                let verdict = RuleVerifier::default().joint_reward(query, &trajectory);
                println!("-- verification --");
                println!(
                    "reward {} | conclusion {:?}",
                    verdict.r, verdict.trajectory_verdict.conclusion
                );
                for rubric in &verdict.trajectory_verdict.rubrics {
                    let mark = if rubric.passed { "pass" } else { "FAIL" };
                    println!("  [{mark}] {}", rubric.name);
                    for diagnostic in &rubric.diagnostics {
                        println!("         {diagnostic}");
                    }
                }
                for turn in &verdict.turn_verdicts {
                    if !turn.passes() {
                        println!("  turn {} FAILED: {:?}", turn.turn_index, turn.diagnostics);
                    }
                }
            }
            None => println!(
                "(query {} not present in {})",
                record.query_id,
                queries_path.display()
            ),
        }
    }
    Ok(ExitCode::SUCCESS)
}
