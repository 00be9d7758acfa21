//! Optional external judge: the same verdict vocabulary served by a hosted
//! text-completion model behind a minimal HTTP contract (prompt string in,
//! completion string out). Network, timeout, and parse failures all map to
//! `verifier_failed`; the reward defaults to 0 in that case.

use super::{
    Conclusion, RewardModel, RewardRecord, RubricResult, TrajectoryVerdict, TurnVerdict,
    RUBRIC_NAMES,
};
use crate::domain::Query;
use crate::protocol::{SegmentKind, Trajectory};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

pub const TRAJECTORY_JUDGE_PROMPT: &str = r#"As a travel planning judger, you will evaluate whether the agent's response adheres to the following criteria.

You will receive:
1. [Query]: Contains the user's needs and travel constraints.
2. [Agent's Response]: The AI travel assistant's final response, which you will need to verify.
Please strictly follow the following [Evaluation Rubrics] to make quality assessments.

Evaluation Rubrics
1. [Is the answer complete?]
2. [Is the main requirement understood accurately?]
3. [Is the logic sound?]
4. [Are other constraints met?]
5. [Are specific requirements met?]
6. [Emergency backup plan?]

Available Tools
poi_search(query, city_name, **kwargs)
route_planning(origin, destination, city_name)
flight_search(depart_city, arrival_city, depart_date, **kwargs)
train_search(depart_city, arrival_city, depart_date, **kwargs)
hotel_search(city_name, checkin_date, checkout_date, **kwargs)
web_search(query)

Evaluation Output
Evaluation Reason: Provide the analysis process and reasons.
Final Conclusion: {{{Very satisfied}}} or {{{Very satisfied but did not address unexpected situations}}} or {{{Basically satisfied, other constraints or specific requirements were not met}}} or {{{Dissatisfied, logically unreasonable}}} or {{{Dissatisfied, main requirements misunderstood}}} or {{{Dissatisfied, incomplete answer}}}

Let's get started! Return the evaluation reason and final conclusion.
"#;

pub const TURN_JUDGE_PROMPT: &str = r#"As a travel planning judger, you will evaluate whether the agent's response adheres to the following criteria.

You will receive:
1. [Query]: Contains the user's needs and travel constraints.
2. [Agent's Response]: The AI travel assistant's final response, which you will need to verify.
Please strictly follow the following [Evaluation Rubrics] to make quality assessments.
3. [Tool response used for agent's response generation]: What information the AI assistant used for response generation:
<tool_response>..</tool_response>

Evaluation Rubrics
1. [Is the tool call parameters/logic correct?]
2. [Is the agent's response accurately reflect the tool response?]

Available Tools
poi_search(query, city_name, **kwargs)
route_planning(origin, destination, city_name)
flight_search(depart_city, arrival_city, depart_date, **kwargs)
train_search(depart_city, arrival_city, depart_date, **kwargs)
hotel_search(city_name, checkin_date, checkout_date, **kwargs)
web_search(query)

Evaluation Output
Evaluation Reason: Provide the analysis process and reasons.
Final Conclusion: Satisfied or Unsatisfied where inconsistent information between agent response and tool response, or Unsatisfied with tool call logic error.

Let's get started! Return the evaluation reason and final conclusion.
"#;

/// Assemble the trajectory-level prompt bundle for one query/answer pair.
pub fn build_trajectory_prompt(query_text: &str, answer: &str) -> String {
    format!("{TRAJECTORY_JUDGE_PROMPT}\n[Query]: {query_text}\n\n[Agent's Response]: {answer}\n")
}

/// Assemble the turn-level prompt bundle, including the turn's tool exchange.
pub fn build_turn_prompt(
    query_text: &str,
    answer: &str,
    call_body: &str,
    response_body: &str,
) -> String {
    format!(
        "{TURN_JUDGE_PROMPT}\n[Query]: {query_text}\n\n[Agent's Response]: {answer}\n\n[Tool response used for agent's response generation]:\n<tool_call>{call_body}</tool_call>\n<tool_response>{response_body}</tool_response>\n"
    )
}

/// Map a completion's "Final Conclusion" line to a verdict. Longer phrases
/// are matched first so "Very satisfied but ..." does not collapse into
/// "Very satisfied".
pub fn parse_trajectory_conclusion(completion: &str) -> Option<Conclusion> {
    let line = completion
        .lines()
        .rev()
        .find(|l| l.contains("Final Conclusion"))
        .unwrap_or(completion);
    let ordered = [
        Conclusion::SatisfiedNoContingency,
        Conclusion::BasicConstraintMiss,
        Conclusion::LogicUnreasonable,
        Conclusion::MainRequirementMisread,
        Conclusion::IncompleteAnswer,
        Conclusion::VerySatisfied,
    ];
    ordered.into_iter().find(|c| line.contains(c.phrase()))
}

/// Map a turn-level completion to `(call_logic_ok, consistency_ok)`.
pub fn parse_turn_conclusion(completion: &str) -> Option<(bool, bool)> {
    let line = completion
        .lines()
        .rev()
        .find(|l| l.contains("Final Conclusion"))
        .unwrap_or(completion);
    if line.contains("Unsatisfied with tool call logic error") {
        Some((false, true))
    } else if line.contains("Unsatisfied where inconsistent information") {
        Some((true, false))
    } else if line.contains("Unsatisfied") {
        Some((false, false))
    } else if line.contains("Satisfied") {
        Some((true, true))
    } else {
        None
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("completion did not contain a recognizable conclusion")]
    Unparseable,
}

/// Text-in/text-out completion transport. The HTTP client is one
/// implementation; tests provide in-process fakes.
pub trait CompletionClient: Sync {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError>;
}

#[derive(Debug, Clone)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Bound on concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            endpoint: "http://127.0.0.1:8900/complete".into(),
            timeout_ms: 10_000,
            max_in_flight: 4,
        }
    }
}

/// Blocking HTTP client for the single-endpoint contract.
pub struct HttpCompletionClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpCompletionClient {
    pub fn new(config: &JudgeConfig) -> HttpCompletionClient {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build();
        HttpCompletionClient {
            endpoint: config.endpoint.clone(),
            agent: agent_config.into(),
        }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .content_type("text/plain")
            .send(prompt)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => JudgeError::Status(code),
                other => JudgeError::Transport(other.to_string()),
            })?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| JudgeError::Transport(e.to_string()))
    }
}

/// Counting semaphore bounding concurrent judge requests.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.available.notify_one();
    }
}

/// Reward model backed by an external judge. Produces the same
/// [`RewardRecord`] shape as the rule engine, with rubric detail left to the
/// judge's free-text reasoning (only the conclusion line is machine-read).
pub struct ExternalJudge<C: CompletionClient> {
    client: C,
    gate: Gate,
}

impl<C: CompletionClient> ExternalJudge<C> {
    pub fn new(client: C, max_in_flight: usize) -> ExternalJudge<C> {
        ExternalJudge {
            client,
            gate: Gate::new(max_in_flight),
        }
    }

    pub fn from_config(config: &JudgeConfig) -> ExternalJudge<HttpCompletionClient> {
        ExternalJudge::new(HttpCompletionClient::new(config), config.max_in_flight)
    }

    fn complete(&self, prompt: &str) -> Result<String, JudgeError> {
        self.gate.acquire();
        let result = self.client.complete(prompt);
        self.gate.release();
        result
    }

    fn failed(trajectory: &Trajectory, start: Instant) -> RewardRecord {
        RewardRecord {
            trajectory_id: trajectory.query_id.clone(),
            r: 0,
            trajectory_verdict: TrajectoryVerdict {
                conclusion: Conclusion::IncompleteAnswer,
                rubrics: Vec::new(),
            },
            turn_verdicts: Vec::new(),
            verifier_latency_ms: start.elapsed().as_millis() as u64,
            verifier_failed: true,
        }
    }
}

impl<C: CompletionClient> RewardModel for ExternalJudge<C> {
    fn joint_reward(&self, query: &Query, trajectory: &Trajectory) -> RewardRecord {
        let start = Instant::now();
        let answer = trajectory.answer_body().unwrap_or_default();
        let prompt = build_trajectory_prompt(&query.text, answer);
        let conclusion = match self
            .complete(&prompt)
            .map(|c| parse_trajectory_conclusion(&c))
        {
            Ok(Some(conclusion)) => conclusion,
            _ => return Self::failed(trajectory, start),
        };
        let trajectory_verdict = TrajectoryVerdict {
            conclusion,
            rubrics: RUBRIC_NAMES
                .iter()
                .map(|name| RubricResult {
                    name: name.to_string(),
                    passed: conclusion.passes(),
                    diagnostics: vec!["graded by external judge".to_string()],
                })
                .collect(),
        };
        if !conclusion.passes() {
            return RewardRecord {
                trajectory_id: trajectory.query_id.clone(),
                r: 0,
                trajectory_verdict,
                turn_verdicts: Vec::new(),
                verifier_latency_ms: start.elapsed().as_millis() as u64,
                verifier_failed: false,
            };
        }
        let mut turn_verdicts = Vec::new();
        let mut all_pass = true;
        for (turn_index, (call_body, response_body)) in trajectory.turns().iter().enumerate() {
            let prompt =
                build_turn_prompt(&query.text, answer, call_body, response_body.unwrap_or(""));
            let (call_logic_ok, consistency_ok) =
                match self.complete(&prompt).map(|c| parse_turn_conclusion(&c)) {
                    Ok(Some(flags)) => flags,
                    _ => return Self::failed(trajectory, start),
                };
            all_pass &= call_logic_ok && consistency_ok;
            turn_verdicts.push(TurnVerdict {
                turn_index,
                call_logic_ok,
                consistency_ok,
                diagnostics: vec!["graded by external judge".to_string()],
            });
        }
        RewardRecord {
            trajectory_id: trajectory.query_id.clone(),
            r: u8::from(all_pass),
            trajectory_verdict,
            turn_verdicts,
            verifier_latency_ms: start.elapsed().as_millis() as u64,
            verifier_failed: false,
        }
    }
}

/// Segment count of the answer context a judge sees; used by telemetry.
pub fn judge_context_segments(trajectory: &Trajectory) -> usize {
    trajectory
        .segments
        .iter()
        .filter(|s| s.kind != SegmentKind::ToolResponse)
        .count()
}
