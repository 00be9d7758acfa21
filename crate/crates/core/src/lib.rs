//! Deterministic desk-scale agentic-RL stack for travel planning.
//!
//! The crate is organized around the training pipeline:
//!
//! 1. [`sandbox`] — a seeded synthetic travel world exposing six cached tools
//!    (flight/train/hotel/POI/route/web) with day-epoch refresh and optional
//!    live-mode flakiness injection.
//! 2. [`domain`] — queries as typed atomic intents, plus the structured
//!    itinerary that policies emit and verifiers check.
//! 3. [`protocol`] — the tagged trajectory format (`<think>`, `<tool_call>`,
//!    `<tool_response>`, `<answer>`), its parser/renderer, strict format
//!    validation, and the multi-turn episode loop.
//! 4. [`policy`] — a scripted oracle teacher and a learnable featurized
//!    softmax policy with exact log-probabilities, entropy, and gradients,
//!    plus behavior cloning with observation masking.
//! 5. [`verifier`] — hierarchical reward modeling: a trajectory-level
//!    feasibility rubric engine, turn-level consistency checks, and joint
//!    binary reward assembly, with a pluggable external-judge client.
//! 6. [`trainer`] — replay-augmented group-relative policy optimization:
//!    group rollouts, std-filtering, normalized advantages, clipped surrogate
//!    with KL penalty, a failed-query experience buffer, and full telemetry.
//! 7. [`datagen`] — query synthesis from atomic-intent enumeration,
//!    difficulty scoring via repeated sampling, benchmark splits, and
//!    cold-start trajectory distillation.
//!
//! Everything is deterministic under fixed seeds: regenerating a world,
//! replaying an episode, or re-running a training job with the same inputs
//! produces byte-identical outputs.

pub mod datagen;
pub mod domain;
pub mod jsonl;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod sandbox;
pub mod trainer;
pub mod verifier;

pub use domain::{AtomicIntent, Difficulty, IntentSet, Itinerary, Query};
pub use policy::{DecisionRecord, PolicyParams, ScriptedOracle, SoftmaxPolicy};
pub use protocol::{EpisodeLimits, Segment, SegmentKind, Terminal, Trajectory};
pub use sandbox::{Sandbox, ToolCall, ToolName, ToolResponse, WorldConfig, WorldState};
pub use trainer::{ExperienceBuffer, StepMetrics, TrainerConfig};
pub use verifier::{Conclusion, RewardRecord, RuleVerifier, TrajectoryVerdict, TurnVerdict};
