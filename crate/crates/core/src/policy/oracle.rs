//! The scripted teacher: a deterministic planner that gathers transport,
//! hotel, and POI information (falling back to the other transport mode when
//! a search comes back empty) and then emits a constraint-respecting answer.
//! Its decisions are recorded with log-probability zero so verified traces
//! can seed behavior cloning.

use super::actions::{self, GatheredState, ANSWER_TEMPLATE};
use super::{pack_mask, DecisionRecord};
use crate::domain::{Query, TransportMode};
use crate::protocol::{Agent, AgentAction, AgentStep, Observation, Segment, SegmentKind};
use crate::sandbox::{ToolData, ToolResponse};

#[derive(Debug, Default)]
pub struct ScriptedOracle {
    last_template: usize,
}

impl ScriptedOracle {
    pub fn new() -> ScriptedOracle {
        ScriptedOracle::default()
    }
}

/// Deterministic plan: outbound transport (preferred mode first, other mode
/// as fallback when a search comes back empty), return transport, hotel,
/// required POI; then a reflection step that widens the transport pools when
/// no gathered combination satisfies the hard constraints yet. Answers once
/// nothing useful remains to try.
pub fn oracle_template(query: &Query, state: &GatheredState) -> usize {
    let intents = &query.intents;
    let preferred = intents
        .transport_mode_preference
        .unwrap_or(TransportMode::Flight);
    let order = [preferred, other_mode(preferred)];
    let round = intents.effective_return_date().is_some();

    if state.outbound.is_empty() {
        for mode in order {
            if !state.outbound_modes_called.contains(&mode) {
                return template_for_mode(mode);
            }
        }
    }
    if round && state.return_options.is_empty() {
        for mode in order {
            if !state.return_modes_called.contains(&mode) {
                return template_for_mode(mode);
            }
        }
    }
    if state.hotel_pending(query) {
        return 2;
    }
    if state.poi_pending(query) {
        return 4;
    }
    if !actions::satisfying_combo_exists(query, state) {
        for mode in order {
            if !state.outbound_modes_called.contains(&mode) {
                return template_for_mode(mode);
            }
        }
        if round {
            for mode in order {
                if !state.return_modes_called.contains(&mode) {
                    return template_for_mode(mode);
                }
            }
        }
    }
    ANSWER_TEMPLATE
}

fn other_mode(mode: TransportMode) -> TransportMode {
    match mode {
        TransportMode::Flight => TransportMode::Train,
        TransportMode::Train => TransportMode::Flight,
    }
}

fn template_for_mode(mode: TransportMode) -> usize {
    match mode {
        TransportMode::Flight => 0,
        TransportMode::Train => 1,
    }
}

impl Agent for ScriptedOracle {
    fn act(
        &mut self,
        query: &Query,
        segments: &[Segment],
        _turn: usize,
    ) -> Result<AgentStep, String> {
        let state = GatheredState::from_segments(query, segments);
        let features = actions::features(query, &state);
        let mut template = oracle_template(query, &state);
        if !features.valid[template] {
            template = ANSWER_TEMPLATE;
        }
        self.last_template = template;
        let decision = DecisionRecord {
            bucket: features.bucket,
            valid: pack_mask(&features.valid),
            chosen: template as u8,
            log_prob: 0.0,
            masked: false,
        };
        let (thought, action) =
            actions::bind_template(template, query, &state).unwrap_or_else(|| {
                let (_, body) =
                    actions::build_answer(query, &state, actions::AnswerSelector::FirstListed);
                (
                    "Falling back to a direct answer.".to_string(),
                    AgentAction::Answer(body),
                )
            });
        Ok(AgentStep {
            thought,
            action,
            decision: Some(decision),
        })
    }

    fn observe(&mut self, query: &Query, segments: &[Segment], _turn: usize) -> Observation {
        let state = GatheredState::from_segments(query, segments);
        let features = actions::features(query, &state);
        let reflection = segments
            .iter()
            .rev()
            .find(|s| s.kind == SegmentKind::ToolResponse)
            .map(|s| match ToolResponse::from_body(&s.body) {
                Some(r) if r.ok => {
                    let count = match r.data {
                        Some(ToolData::Transport { options }) => options.len(),
                        Some(ToolData::Hotels { options }) => options.len(),
                        Some(ToolData::Pois { matches }) => matches.len(),
                        Some(ToolData::Web { results }) => results.len(),
                        _ => 1,
                    };
                    format!("The {} call returned {count} result(s).", r.tool)
                }
                Some(r) => format!(
                    "The {} call failed: {}.",
                    r.tool,
                    r.error.unwrap_or_else(|| "unknown error".into())
                ),
                None => "The tool response could not be interpreted.".to_string(),
            });
        Observation {
            decision: Some(DecisionRecord {
                bucket: features.bucket,
                valid: pack_mask(&features.valid),
                chosen: self.last_template as u8,
                log_prob: 0.0,
                masked: true,
            }),
            reflection,
        }
    }
}
