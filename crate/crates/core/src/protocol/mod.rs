//! The tagged trajectory representation and the multi-turn episode loop.
//!
//! A trajectory interleaves thought, action, and observation segments:
//!
//! ```text
//! <think>...</think>
//! <tool_call>flight_search(depart_city="Beijing", ...)</tool_call>
//! <tool_response>{"tool":"flight_search","ok":true,...}</tool_response>
//! <tool_response_thinking>...</tool_response_thinking>
//! ...
//! <answer>...</answer>
//! ```
//!
//! [`parse_trajectory`] and [`render_trajectory`] are mutual inverses on
//! well-formed input; [`validate_format`] applies the strict checks used to
//! filter teacher data. [`run_episode`] drives an [`Agent`] against a
//! [`ToolEnvironment`] under turn and length limits, recording every policy
//! decision alongside the segments.

mod answer;
mod call;
mod episode;

pub use answer::{extract_itinerary, render_itinerary_block, ExtractError};
pub use call::{parse_tool_call, ToolCallError};
pub use episode::{
    run_episode, Agent, AgentAction, AgentStep, LiveEnv, Observation, SandboxEnv, ToolEnvironment,
};

use crate::policy::DecisionRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Think,
    ToolCallThinking,
    ToolCall,
    ToolResponse,
    ToolResponseThinking,
    Answer,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 6] = [
        SegmentKind::Think,
        SegmentKind::ToolCallThinking,
        SegmentKind::ToolCall,
        SegmentKind::ToolResponse,
        SegmentKind::ToolResponseThinking,
        SegmentKind::Answer,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            SegmentKind::Think => "think",
            SegmentKind::ToolCallThinking => "tool_call_thinking",
            SegmentKind::ToolCall => "tool_call",
            SegmentKind::ToolResponse => "tool_response",
            SegmentKind::ToolResponseThinking => "tool_response_thinking",
            SegmentKind::Answer => "answer",
        }
    }

    fn from_tag(tag: &str) -> Option<SegmentKind> {
        Self::ALL.iter().copied().find(|k| k.tag() == tag)
    }

    /// Thought-kind segments carry agent reasoning text.
    pub fn is_thought(&self) -> bool {
        matches!(
            self,
            SegmentKind::Think | SegmentKind::ToolCallThinking | SegmentKind::ToolResponseThinking
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub body: String,
    /// Which tool-call turn this segment belongs to (the upcoming turn for
    /// thought segments, the issuing turn for calls and responses).
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Answered,
    TurnLimit,
    LengthLimit,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub query_id: String,
    pub segments: Vec<Segment>,
    pub terminal: Terminal,
    #[serde(default)]
    pub decisions: Vec<DecisionRecord>,
}

impl Trajectory {
    pub fn tool_call_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::ToolCall)
            .count()
    }

    pub fn answer_body(&self) -> Option<&str> {
        self.segments
            .iter()
            .rev()
            .find(|s| s.kind == SegmentKind::Answer)
            .map(|s| s.body.as_str())
    }

    /// `(call body, response body)` pairs in turn order.
    pub fn turns(&self) -> Vec<(&str, Option<&str>)> {
        let mut out: Vec<(&str, Option<&str>)> = Vec::new();
        for (i, segment) in self.segments.iter().enumerate() {
            if segment.kind == SegmentKind::ToolCall {
                let response = self
                    .segments
                    .get(i + 1)
                    .and_then(|s| (s.kind == SegmentKind::ToolResponse).then_some(s.body.as_str()));
                out.push((segment.body.as_str(), response));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_turns: usize,
    /// Desk-scale stand-in for a token cap: total segment budget.
    pub max_total_segments: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits {
            max_turns: 8,
            max_total_segments: 64,
        }
    }
}

/// All known delimiters; a segment body containing any of them is malformed.
fn contains_delimiter(body: &str) -> bool {
    SegmentKind::ALL.iter().any(|k| {
        body.contains(&format!("<{}>", k.tag())) || body.contains(&format!("</{}>", k.tag()))
    })
}

/// Parse tagged text into segments. Unbalanced, unknown, or interleaved tags
/// and ordering violations come back as `terminal = Malformed`; there is no
/// error path.
pub fn parse_trajectory(text: &str) -> Trajectory {
    let malformed = |segments: Vec<Segment>| Trajectory {
        query_id: String::new(),
        segments,
        terminal: Terminal::Malformed,
        decisions: Vec::new(),
    };
    let mut segments: Vec<Segment> = Vec::new();
    let mut rest = text;
    let mut calls = 0usize;
    loop {
        let trimmed = rest.trim_start();
        if trimmed.is_empty() {
            break;
        }
        if !trimmed.starts_with('<') {
            return malformed(segments);
        }
        let Some(close_angle) = trimmed.find('>') else {
            return malformed(segments);
        };
        let tag_name = &trimmed[1..close_angle];
        let Some(kind) = SegmentKind::from_tag(tag_name) else {
            return malformed(segments);
        };
        let after_open = &trimmed[close_angle + 1..];
        let closing = format!("</{tag_name}>");
        let Some(body_end) = after_open.find(&closing) else {
            return malformed(segments);
        };
        let body = &after_open[..body_end];
        if contains_delimiter(body) {
            return malformed(segments);
        }
        // Ordering rules.
        match kind {
            SegmentKind::ToolResponse => {
                if segments.last().map(|s| s.kind) != Some(SegmentKind::ToolCall) {
                    return malformed(segments);
                }
            }
            _ => {
                if segments.last().map(|s| s.kind) == Some(SegmentKind::Answer) {
                    return malformed(segments);
                }
            }
        }
        if segments.iter().any(|s| s.kind == SegmentKind::Answer) {
            return malformed(segments);
        }
        let turn_index = match kind {
            SegmentKind::ToolCall => {
                calls += 1;
                calls - 1
            }
            SegmentKind::ToolResponse => calls - 1,
            _ => calls,
        };
        segments.push(Segment {
            kind,
            body: body.to_string(),
            turn_index,
        });
        rest = &after_open[body_end + closing.len()..];
    }
    let terminal = if segments.last().map(|s| s.kind) == Some(SegmentKind::Answer) {
        Terminal::Answered
    } else {
        // Unanswered text carries no limit marker; label it turn_limit.
        Terminal::TurnLimit
    };
    Trajectory {
        query_id: String::new(),
        segments,
        terminal,
        decisions: Vec::new(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("cannot render a malformed trajectory")]
    Malformed,
    #[error("segment {index} body contains tag delimiters")]
    DelimiterInBody { index: usize },
    #[error("segment {index}: tool_response without preceding tool_call")]
    OrphanResponse { index: usize },
    #[error("segment {index}: answer must be the final segment")]
    AnswerNotLast { index: usize },
}

/// Render segments back to canonical tagged text (one segment per line).
/// Inverse of [`parse_trajectory`] on well-formed input.
pub fn render_trajectory(trajectory: &Trajectory) -> Result<String, RenderError> {
    if trajectory.terminal == Terminal::Malformed {
        return Err(RenderError::Malformed);
    }
    let segments = &trajectory.segments;
    for (index, segment) in segments.iter().enumerate() {
        if contains_delimiter(&segment.body) {
            return Err(RenderError::DelimiterInBody { index });
        }
        if segment.kind == SegmentKind::ToolResponse
            && (index == 0 || segments[index - 1].kind != SegmentKind::ToolCall)
        {
            return Err(RenderError::OrphanResponse { index });
        }
        if segment.kind == SegmentKind::Answer && index + 1 != segments.len() {
            return Err(RenderError::AnswerNotLast { index });
        }
    }
    Ok(segments
        .iter()
        .map(|s| format!("<{tag}>{body}</{tag}>", tag = s.kind.tag(), body = s.body))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatReport {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

/// Strict format validation used to filter teacher data: tags balanced,
/// ordering invariants hold, exactly one final answer, and every tool call
/// parses as a known tool signature.
pub fn validate_format(trajectory: &Trajectory) -> FormatReport {
    let mut diagnostics = Vec::new();
    if trajectory.terminal == Terminal::Malformed {
        diagnostics.push("malformed tag structure".to_string());
    }
    let segments = &trajectory.segments;
    let answers = segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Answer)
        .count();
    if answers == 0 {
        diagnostics.push("missing answer".to_string());
    } else if answers > 1 {
        diagnostics.push("multiple answer segments".to_string());
    } else if segments.last().map(|s| s.kind) != Some(SegmentKind::Answer) {
        diagnostics.push("answer is not the final segment".to_string());
    }
    for (index, segment) in segments.iter().enumerate() {
        if contains_delimiter(&segment.body) {
            diagnostics.push(format!("segment {index}: body contains tag delimiters"));
        }
        match segment.kind {
            SegmentKind::ToolResponse => {
                if index == 0 || segments[index - 1].kind != SegmentKind::ToolCall {
                    diagnostics.push(format!("segment {index}: orphan tool_response"));
                }
            }
            SegmentKind::ToolCall => {
                if let Err(e) = parse_tool_call(&segment.body) {
                    diagnostics.push(format!("segment {index}: {e}"));
                }
                if segments.get(index + 1).map(|s| s.kind) != Some(SegmentKind::ToolResponse) {
                    diagnostics.push(format!("segment {index}: tool_call without response"));
                }
            }
            _ => {}
        }
    }
    FormatReport {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

/// Persisted form: one line per trajectory with the bit-exact tagged text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub query_id: String,
    pub text: String,
    pub terminal: Terminal,
    #[serde(default)]
    pub decisions: Vec<DecisionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<String>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(
        trajectory: &Trajectory,
        reward: Option<u8>,
        conclusion: Option<String>,
    ) -> Result<TrajectoryRecord, RenderError> {
        Ok(TrajectoryRecord {
            query_id: trajectory.query_id.clone(),
            text: render_trajectory(trajectory)?,
            terminal: trajectory.terminal,
            decisions: trajectory.decisions.clone(),
            reward,
            conclusion,
        })
    }

    /// Rebuild the in-memory trajectory; the stored terminal wins over the
    /// one inferred from text (text cannot distinguish turn from length
    /// limits).
    pub fn to_trajectory(&self) -> Trajectory {
        let mut trajectory = parse_trajectory(&self.text);
        trajectory.query_id = self.query_id.clone();
        trajectory.decisions = self.decisions.clone();
        if trajectory.terminal != Terminal::Malformed {
            trajectory.terminal = self.terminal;
        }
        trajectory
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(kind: SegmentKind, body: &str, turn: usize) -> Segment {
        Segment {
            kind,
            body: body.to_string(),
            turn_index: turn,
        }
    }

    #[test]
    fn parse_minimal_answered_trace() {
        let text = "<think>plan</think><tool_call>web_search(\"x\")</tool_call><tool_response>{}</tool_response><answer>done</answer>";
        let t = parse_trajectory(text);
        assert_eq!(t.terminal, Terminal::Answered);
        assert_eq!(t.segments.len(), 4);
        assert_eq!(
            t.segments.iter().map(|s| s.kind).collect::<Vec<_>>(),
            vec![
                SegmentKind::Think,
                SegmentKind::ToolCall,
                SegmentKind::ToolResponse,
                SegmentKind::Answer
            ]
        );
        assert_eq!(t.segments[1].turn_index, 0);
        assert_eq!(t.segments[2].turn_index, 0);
    }

    #[test]
    fn orphan_response_is_malformed() {
        let t = parse_trajectory("<tool_response>{}</tool_response>");
        assert_eq!(t.terminal, Terminal::Malformed);
        let t = parse_trajectory("<think>x</think><tool_response>{}</tool_response>");
        assert_eq!(t.terminal, Terminal::Malformed);
    }

    #[test]
    fn unknown_or_unbalanced_tags_are_malformed() {
        assert_eq!(
            parse_trajectory("<wat>x</wat>").terminal,
            Terminal::Malformed
        );
        assert_eq!(parse_trajectory("<think>x").terminal, Terminal::Malformed);
        assert_eq!(
            parse_trajectory("stray text <think>x</think>").terminal,
            Terminal::Malformed
        );
    }

    #[test]
    fn text_after_answer_is_malformed() {
        let t = parse_trajectory("<answer>a</answer><think>more</think>");
        assert_eq!(t.terminal, Terminal::Malformed);
    }

    #[test]
    fn empty_text_renders_and_parses_as_empty() {
        let t = parse_trajectory("");
        assert!(t.segments.is_empty());
        let rendered = render_trajectory(&Trajectory {
            query_id: String::new(),
            segments: vec![],
            terminal: Terminal::TurnLimit,
            decisions: vec![],
        })
        .unwrap();
        assert_eq!(rendered, "");
    }

    #[test]
    fn single_answer_round_trip() {
        let t = Trajectory {
            query_id: "q".into(),
            segments: vec![seg(SegmentKind::Answer, "the plan", 0)],
            terminal: Terminal::Answered,
            decisions: vec![],
        };
        let text = render_trajectory(&t).unwrap();
        assert_eq!(text, "<answer>the plan</answer>");
        let parsed = parse_trajectory(&text);
        assert_eq!(parsed.segments, t.segments);
        assert_eq!(parsed.terminal, Terminal::Answered);
    }

    #[test]
    fn render_rejects_malformed_structures() {
        let orphan = Trajectory {
            query_id: String::new(),
            segments: vec![seg(SegmentKind::ToolResponse, "{}", 0)],
            terminal: Terminal::TurnLimit,
            decisions: vec![],
        };
        assert!(matches!(
            render_trajectory(&orphan),
            Err(RenderError::OrphanResponse { index: 0 })
        ));
        let delim = Trajectory {
            query_id: String::new(),
            segments: vec![seg(SegmentKind::Think, "evil </think> text", 0)],
            terminal: Terminal::TurnLimit,
            decisions: vec![],
        };
        assert!(matches!(
            render_trajectory(&delim),
            Err(RenderError::DelimiterInBody { .. })
        ));
    }

    #[test]
    fn validate_format_requires_final_answer_and_known_tools() {
        let good = parse_trajectory(
            "<think>t</think><tool_call>web_search(query=\"beijing\")</tool_call><tool_response>{}</tool_response><answer>a</answer>",
        );
        assert!(validate_format(&good).ok);

        let unanswered = parse_trajectory("<think>t</think>");
        let report = validate_format(&unanswered);
        assert!(!report.ok);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.contains("missing answer")));

        let bad_tool = parse_trajectory(
            "<tool_call>fly_search(\"a\")</tool_call><tool_response>{}</tool_response><answer>a</answer>",
        );
        let report = validate_format(&bad_tool);
        assert!(!report.ok);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.contains("unknown tool")));
    }

    #[test]
    fn both_thinking_vocabularies_parse() {
        let text = "<tool_call_thinking>a</tool_call_thinking><tool_call>web_search(query=\"x\")</tool_call><tool_response>{}</tool_response><tool_response_thinking>b</tool_response_thinking><answer>c</answer>";
        let t = parse_trajectory(text);
        assert_eq!(t.terminal, Terminal::Answered);
        assert_eq!(t.segments[0].kind, SegmentKind::ToolCallThinking);
        assert_eq!(t.segments[3].kind, SegmentKind::ToolResponseThinking);
        assert_eq!(render_trajectory(&t).unwrap().replace('\n', ""), text);
    }
}
