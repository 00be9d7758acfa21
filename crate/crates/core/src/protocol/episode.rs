//! The multi-turn episode loop: policy emits (thought, action), the
//! environment answers tool calls, and the loop stops on answer, turn limit,
//! or segment budget. Policy and environment failures terminate the episode
//! as malformed instead of propagating, so a training loop never crashes on
//! a single bad rollout.

use super::{EpisodeLimits, Segment, SegmentKind, Terminal, Trajectory};
use crate::domain::Query;
use crate::policy::DecisionRecord;
use crate::protocol::parse_tool_call;
use crate::sandbox::{LiveModeConfig, Sandbox, ToolCall, ToolResponse};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum AgentAction {
    /// Raw tool-call body text; the loop parses and executes it.
    ToolCall(String),
    /// Final answer body.
    Answer(String),
}

#[derive(Debug, Clone)]
pub struct AgentStep {
    pub thought: String,
    pub action: AgentAction,
    pub decision: Option<DecisionRecord>,
}

/// What an agent contributes after seeing a tool response: the masked
/// pseudo-decision that stands in for the environment-injected tokens, and
/// optional reflection text.
#[derive(Debug, Clone, Default)]
pub struct Observation {
    pub decision: Option<DecisionRecord>,
    pub reflection: Option<String>,
}

pub trait Agent {
    fn act(
        &mut self,
        query: &Query,
        segments: &[Segment],
        turn: usize,
    ) -> Result<AgentStep, String>;

    fn observe(&mut self, _query: &Query, _segments: &[Segment], _turn: usize) -> Observation {
        Observation::default()
    }
}

pub trait ToolEnvironment {
    fn execute(&mut self, call: &ToolCall) -> (ToolResponse, String);
}

/// Plain cached sandbox access.
pub struct SandboxEnv<'a> {
    pub sandbox: &'a Sandbox,
}

impl ToolEnvironment for SandboxEnv<'_> {
    fn execute(&mut self, call: &ToolCall) -> (ToolResponse, String) {
        self.sandbox.call(call)
    }
}

/// Sandbox with live-mode flakiness injection; owns a per-episode rng stream
/// so parallel rollouts stay deterministic.
pub struct LiveEnv<'a> {
    pub sandbox: &'a Sandbox,
    pub config: LiveModeConfig,
    pub rng: ChaCha8Rng,
}

impl ToolEnvironment for LiveEnv<'_> {
    fn execute(&mut self, call: &ToolCall) -> (ToolResponse, String) {
        self.sandbox.call_live(&self.config, &mut self.rng, call)
    }
}

/// Drive one episode. Segment and tool-call counts respect the limits
/// exactly: a tool call attempted at the turn cap terminates the episode
/// without being appended.
pub fn run_episode(
    agent: &mut dyn Agent,
    env: &mut dyn ToolEnvironment,
    query: &Query,
    limits: &EpisodeLimits,
) -> Trajectory {
    let mut segments: Vec<Segment> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut turn = 0usize;

    let terminal = loop {
        // A decision needs room for at least a thought and an action.
        if segments.len() + 2 > limits.max_total_segments {
            break Terminal::LengthLimit;
        }
        let step = match agent.act(query, &segments, turn) {
            Ok(step) => step,
            Err(_) => break Terminal::Malformed,
        };
        if let Some(decision) = step.decision {
            decisions.push(decision);
        }
        let thought_kind = if turn == 0 {
            SegmentKind::Think
        } else {
            SegmentKind::ToolCallThinking
        };
        match step.action {
            AgentAction::Answer(body) => {
                if !step.thought.is_empty() {
                    segments.push(Segment {
                        kind: thought_kind,
                        body: step.thought,
                        turn_index: turn,
                    });
                }
                segments.push(Segment {
                    kind: SegmentKind::Answer,
                    body,
                    turn_index: turn,
                });
                break Terminal::Answered;
            }
            AgentAction::ToolCall(body) => {
                if turn >= limits.max_turns {
                    break Terminal::TurnLimit;
                }
                let needed = 2 + usize::from(!step.thought.is_empty());
                if segments.len() + needed > limits.max_total_segments {
                    break Terminal::LengthLimit;
                }
                if !step.thought.is_empty() {
                    segments.push(Segment {
                        kind: thought_kind,
                        body: step.thought,
                        turn_index: turn,
                    });
                }
                let response_body = match parse_tool_call(&body) {
                    Ok(call) => env.execute(&call).1,
                    Err(e) => {
                        // Syntactically invalid calls get an in-band error
                        // response and count against tool-call accuracy.
                        ToolResponse {
                            tool: "unknown".to_string(),
                            ok: false,
                            error: Some(e.to_string()),
                            data: None,
                        }
                        .to_body()
                    }
                };
                segments.push(Segment {
                    kind: SegmentKind::ToolCall,
                    body,
                    turn_index: turn,
                });
                segments.push(Segment {
                    kind: SegmentKind::ToolResponse,
                    body: response_body,
                    turn_index: turn,
                });
                turn += 1;
                let observation = agent.observe(query, &segments, turn);
                if let Some(decision) = observation.decision {
                    decisions.push(decision);
                }
                if let Some(reflection) = observation.reflection {
                    if segments.len() < limits.max_total_segments {
                        segments.push(Segment {
                            kind: SegmentKind::ToolResponseThinking,
                            body: reflection,
                            turn_index: turn,
                        });
                    }
                }
            }
        }
    };

    Trajectory {
        query_id: query.id.clone(),
        segments,
        terminal,
        decisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{IntentSet, Query};
    use crate::sandbox::{generate_world, WorldConfig};

    struct AlwaysCall;
    impl Agent for AlwaysCall {
        fn act(&mut self, q: &Query, _s: &[Segment], _t: usize) -> Result<AgentStep, String> {
            Ok(AgentStep {
                thought: "searching".into(),
                action: AgentAction::ToolCall(format!(
                    "web_search(query=\"{} sights\")",
                    q.intents.destination
                )),
                decision: None,
            })
        }
    }

    struct FailingAgent;
    impl Agent for FailingAgent {
        fn act(&mut self, _q: &Query, _s: &[Segment], _t: usize) -> Result<AgentStep, String> {
            Err("internal failure".into())
        }
    }

    fn query() -> Query {
        Query::from_intents(IntentSet {
            origin: "Beijing".into(),
            destination: "Shanghai".into(),
            depart_date: "2025-06-21".parse().unwrap(),
            return_date: None,
            trip_length_days: Some(1),
            arrival_deadline: None,
            budget_total: None,
            hotel_preference: None,
            transport_mode_preference: None,
            poi_requirement: None,
        })
        .unwrap()
    }

    fn sandbox() -> Sandbox {
        let config = WorldConfig {
            cities: 3,
            days: 10,
            ..WorldConfig::default()
        };
        Sandbox::new(generate_world(5, &config).unwrap())
    }

    #[test]
    fn persistent_caller_hits_turn_limit_exactly() {
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let limits = EpisodeLimits {
            max_turns: 3,
            max_total_segments: 64,
        };
        let t = run_episode(&mut AlwaysCall, &mut env, &query(), &limits);
        assert_eq!(t.terminal, Terminal::TurnLimit);
        assert_eq!(t.tool_call_count(), 3);
    }

    #[test]
    fn zero_turn_budget_demands_immediate_answer() {
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let limits = EpisodeLimits {
            max_turns: 0,
            max_total_segments: 64,
        };
        let t = run_episode(&mut AlwaysCall, &mut env, &query(), &limits);
        assert_eq!(t.terminal, Terminal::TurnLimit);
        assert_eq!(t.tool_call_count(), 0);
        assert!(t
            .segments
            .iter()
            .all(|s| s.kind != SegmentKind::ToolResponse));
    }

    #[test]
    fn segment_budget_hits_length_limit() {
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let limits = EpisodeLimits {
            max_turns: 100,
            max_total_segments: 7,
        };
        let t = run_episode(&mut AlwaysCall, &mut env, &query(), &limits);
        assert_eq!(t.terminal, Terminal::LengthLimit);
        assert!(t.segments.len() <= 7);
    }

    #[test]
    fn agent_failure_is_malformed_not_panic() {
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let t = run_episode(
            &mut FailingAgent,
            &mut env,
            &query(),
            &EpisodeLimits::default(),
        );
        assert_eq!(t.terminal, Terminal::Malformed);
    }

    #[test]
    fn responses_match_environment_bytes() {
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let limits = EpisodeLimits {
            max_turns: 2,
            max_total_segments: 64,
        };
        let t = run_episode(&mut AlwaysCall, &mut env, &query(), &limits);
        for (call_body, response_body) in t.turns() {
            let call = parse_tool_call(call_body).unwrap();
            let (_, expected) = sandbox.call(&call);
            assert_eq!(response_body.unwrap(), expected);
        }
    }

    #[test]
    fn bad_call_body_gets_in_band_error_response() {
        struct BadCaller;
        impl Agent for BadCaller {
            fn act(&mut self, _q: &Query, s: &[Segment], _t: usize) -> Result<AgentStep, String> {
                if s.is_empty() {
                    Ok(AgentStep {
                        thought: String::new(),
                        action: AgentAction::ToolCall("fly_search('x')".into()),
                        decision: None,
                    })
                } else {
                    Ok(AgentStep {
                        thought: String::new(),
                        action: AgentAction::Answer("done".into()),
                        decision: None,
                    })
                }
            }
        }
        let sandbox = sandbox();
        let mut env = SandboxEnv { sandbox: &sandbox };
        let t = run_episode(
            &mut BadCaller,
            &mut env,
            &query(),
            &EpisodeLimits::default(),
        );
        assert_eq!(t.terminal, Terminal::Answered);
        let (_, response) = t.turns()[0];
        let response = ToolResponse::from_body(response.unwrap()).unwrap();
        assert!(!response.ok);
        assert!(response.error.unwrap().contains("unknown tool"));
    }
}
