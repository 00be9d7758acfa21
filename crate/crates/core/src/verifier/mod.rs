//! Hierarchical reward modeling.
//!
//! The trajectory-level verifier grades the final itinerary against six
//! rubrics (completeness, main requirement, logic, other constraints,
//! specific requirements, contingency). Any hard-rubric failure makes the
//! reward 0 immediately and the turn-level verifier never runs. When the
//! trajectory passes, every turn is checked for call logic and for
//! consistency between the cited itinerary facts and that turn's tool
//! response; the reward is 1 only if every turn passes. The rule engine is
//! the default; [`judge::ExternalJudge`] speaks the same verdict language
//! over a text-completion endpoint.

pub mod judge;

use crate::domain::{cost_mismatch, Itinerary, Query};
use crate::protocol::{extract_itinerary, parse_tool_call, Terminal, Trajectory};
use crate::sandbox::{ToolData, ToolName, ToolResponse};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

/// Conclusion grades, from best to worst. The first two count as a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    VerySatisfied,
    SatisfiedNoContingency,
    BasicConstraintMiss,
    LogicUnreasonable,
    MainRequirementMisread,
    IncompleteAnswer,
}

impl Conclusion {
    pub fn passes(&self) -> bool {
        matches!(
            self,
            Conclusion::VerySatisfied | Conclusion::SatisfiedNoContingency
        )
    }

    /// The verdict phrase the judge prompt asks for.
    pub fn phrase(&self) -> &'static str {
        match self {
            Conclusion::VerySatisfied => "Very satisfied",
            Conclusion::SatisfiedNoContingency => {
                "Very satisfied but did not address unexpected situations"
            }
            Conclusion::BasicConstraintMiss => {
                "Basically satisfied, other constraints or specific requirements were not met"
            }
            Conclusion::LogicUnreasonable => "Dissatisfied, logically unreasonable",
            Conclusion::MainRequirementMisread => "Dissatisfied, main requirements misunderstood",
            Conclusion::IncompleteAnswer => "Dissatisfied, incomplete answer",
        }
    }
}

pub const RUBRIC_NAMES: [&str; 6] = [
    "Is the answer complete?",
    "Is the main requirement understood accurately?",
    "Is the logic sound?",
    "Are other constraints met?",
    "Are specific requirements met?",
    "Emergency backup plan?",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricResult {
    pub name: String,
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVerdict {
    pub conclusion: Conclusion,
    pub rubrics: Vec<RubricResult>,
}

impl TrajectoryVerdict {
    pub fn passes(&self) -> bool {
        self.conclusion.passes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnVerdict {
    pub turn_index: usize,
    pub call_logic_ok: bool,
    pub consistency_ok: bool,
    pub diagnostics: Vec<String>,
}

impl TurnVerdict {
    pub fn passes(&self) -> bool {
        self.call_logic_ok && self.consistency_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub trajectory_id: String,
    /// Binary reward.
    pub r: u8,
    pub trajectory_verdict: TrajectoryVerdict,
    /// Empty whenever the trajectory verdict short-circuited the reward.
    pub turn_verdicts: Vec<TurnVerdict>,
    pub verifier_latency_ms: u64,
    pub verifier_failed: bool,
}

/// Anything that can serve rewards for trajectories.
pub trait RewardModel: Sync {
    fn joint_reward(&self, query: &Query, trajectory: &Trajectory) -> RewardRecord;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// Minimum minutes between an arrival and a same-day departure.
    pub transfer_buffer_min: u32,
    /// Ablation: trajectory verdict treated as passing regardless of rubrics.
    pub force_trajectory_pass: bool,
    /// Ablation: turn verdicts are not evaluated; all turns count as passing.
    pub force_turn_pass: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            transfer_buffer_min: 60,
            force_trajectory_pass: false,
            force_turn_pass: false,
        }
    }
}

/// The deterministic rule engine. Pure and reentrant; the instrumented
/// turn-verifier counter exists so the short-circuit contract is testable.
#[derive(Debug, Default)]
pub struct RuleVerifier {
    config: VerifierConfig,
    turn_calls: AtomicU64,
}

impl RuleVerifier {
    pub fn new(config: VerifierConfig) -> RuleVerifier {
        RuleVerifier {
            config,
            turn_calls: AtomicU64::new(0),
        }
    }

    /// How many trajectories have entered the turn-verification phase. The
    /// short-circuit contract makes this equal the number of
    /// trajectory-level passes.
    pub fn turn_verifier_invocations(&self) -> u64 {
        self.turn_calls.load(Ordering::Relaxed)
    }

    /// Rubric-by-rubric evaluation of the final itinerary.
    pub fn verify_trajectory(&self, query: &Query, trajectory: &Trajectory) -> TrajectoryVerdict {
        let intents = &query.intents;
        let nights = intents.nights();
        let ret_date = intents.effective_return_date();
        let answer = trajectory.answer_body();
        let itinerary = answer.and_then(|a| extract_itinerary(a).ok());

        let mut rubrics: Vec<RubricResult> = RUBRIC_NAMES
            .iter()
            .map(|name| RubricResult {
                name: name.to_string(),
                passed: true,
                diagnostics: vec![],
            })
            .collect();
        let fail = |rubrics: &mut Vec<RubricResult>, idx: usize, msg: String| {
            rubrics[idx].passed = false;
            rubrics[idx].diagnostics.push(msg);
        };

        // 1. Completeness.
        if trajectory.terminal != Terminal::Answered {
            fail(
                &mut rubrics,
                0,
                format!("episode ended without answer ({:?})", trajectory.terminal),
            );
        }
        match (answer, &itinerary) {
            (None, _) => {}
            (Some(a), None) => {
                fail(
                    &mut rubrics,
                    0,
                    format!("no structured itinerary: {:?}", extract_itinerary(a).err()),
                );
            }
            (Some(_), Some(it)) => {
                if it.outbound_legs.is_empty() {
                    fail(&mut rubrics, 0, "outbound transport missing".into());
                }
                if nights >= 1 && it.hotel_stay.is_none() {
                    fail(
                        &mut rubrics,
                        0,
                        "hotel stay missing for a multi-day trip".into(),
                    );
                }
                if ret_date.is_some() && it.return_legs.is_empty() {
                    fail(&mut rubrics, 0, "return transport missing".into());
                }
            }
        }

        if let Some(it) = &itinerary {
            self.check_main_requirement(query, it, &mut |i, m| fail(&mut rubrics, i, m));
            self.check_logic(query, it, &mut |i, m| fail(&mut rubrics, i, m));
            self.check_constraints(query, it, &mut |i, m| fail(&mut rubrics, i, m));
            self.check_specific(query, trajectory, it, &mut |i, m| fail(&mut rubrics, i, m));
        } else {
            for idx in 1..5 {
                fail(
                    &mut rubrics,
                    idx,
                    "not evaluable: no structured itinerary".into(),
                );
            }
        }

        // 6. Contingency (soft): alternatives or tips in the prose.
        let has_contingency = answer.is_some_and(|a| {
            let lower = a.to_lowercase();
            lower.contains("tip") || lower.contains("alternative") || lower.contains("backup")
        });
        if !has_contingency {
            fail(
                &mut rubrics,
                5,
                "no alternative option or tips section".into(),
            );
        }

        let conclusion = if !rubrics[0].passed {
            Conclusion::IncompleteAnswer
        } else if !rubrics[1].passed {
            Conclusion::MainRequirementMisread
        } else if !rubrics[2].passed {
            Conclusion::LogicUnreasonable
        } else if !rubrics[3].passed || !rubrics[4].passed {
            Conclusion::BasicConstraintMiss
        } else if !rubrics[5].passed {
            Conclusion::SatisfiedNoContingency
        } else {
            Conclusion::VerySatisfied
        };
        TrajectoryVerdict {
            conclusion,
            rubrics,
        }
    }

    fn check_main_requirement(
        &self,
        query: &Query,
        it: &Itinerary,
        fail: &mut impl FnMut(usize, String),
    ) {
        let intents = &query.intents;
        if let (Some(first), Some(last)) = (it.outbound_legs.first(), it.outbound_legs.last()) {
            if !first.origin.eq_ignore_ascii_case(&intents.origin) {
                fail(
                    1,
                    format!(
                        "outbound starts in {}, not {}",
                        first.origin, intents.origin
                    ),
                );
            }
            if !last.destination.eq_ignore_ascii_case(&intents.destination) {
                fail(
                    1,
                    format!(
                        "outbound ends in {}, not {}",
                        last.destination, intents.destination
                    ),
                );
            }
            if first.date != intents.depart_date {
                fail(
                    1,
                    format!(
                        "outbound departs {}, requested {}",
                        first.date, intents.depart_date
                    ),
                );
            }
        }
        if let Some(ret_date) = intents.effective_return_date() {
            if let (Some(first), Some(last)) = (it.return_legs.first(), it.return_legs.last()) {
                if !first.origin.eq_ignore_ascii_case(&intents.destination) {
                    fail(
                        1,
                        format!(
                            "return starts in {}, not {}",
                            first.origin, intents.destination
                        ),
                    );
                }
                if !last.destination.eq_ignore_ascii_case(&intents.origin) {
                    fail(
                        1,
                        format!(
                            "return ends in {}, not {}",
                            last.destination, intents.origin
                        ),
                    );
                }
                if first.date != ret_date {
                    fail(
                        1,
                        format!("return departs {}, requested {}", first.date, ret_date),
                    );
                }
            }
        }
    }

    fn check_logic(&self, query: &Query, it: &Itinerary, fail: &mut impl FnMut(usize, String)) {
        let intents = &query.intents;
        let buffer = self.config.transfer_buffer_min;
        for legs in [&it.outbound_legs, &it.return_legs] {
            for pair in legs.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if !b.origin.eq_ignore_ascii_case(&a.destination) {
                    fail(
                        2,
                        format!("leg chain breaks: {} then {}", a.destination, b.origin),
                    );
                }
                let a_arrival_day = a.date + chrono::Days::new(a.arrive_next_day as u64);
                if b.date < a_arrival_day {
                    fail(
                        2,
                        format!(
                            "leg departs {} before prior arrival {}",
                            b.date, a_arrival_day
                        ),
                    );
                } else if b.date == a_arrival_day
                    && (b.depart_time as u32) < a.arrive_time as u32 + buffer
                {
                    fail(2, format!("transfer tighter than {buffer} minutes"));
                }
            }
        }
        if let Some(hotel) = &it.hotel_stay {
            if hotel.checkin >= hotel.checkout {
                fail(
                    2,
                    format!(
                        "hotel checkout {} not after checkin {}",
                        hotel.checkout, hotel.checkin
                    ),
                );
            }
            if !hotel.city.eq_ignore_ascii_case(&intents.destination) {
                fail(
                    2,
                    format!(
                        "hotel is in {}, trip destination is {}",
                        hotel.city, intents.destination
                    ),
                );
            }
            if let Some(last) = it.outbound_legs.last() {
                let arrival_day = last.date + chrono::Days::new(last.arrive_next_day as u64);
                if arrival_day > hotel.checkin {
                    fail(
                        2,
                        format!(
                            "arrival {} is after hotel checkin day {}",
                            arrival_day, hotel.checkin
                        ),
                    );
                }
            }
            if let Some(first) = it.return_legs.first() {
                if hotel.checkout > first.date {
                    fail(
                        2,
                        format!(
                            "hotel checkout {} after return departure {}",
                            hotel.checkout, first.date
                        ),
                    );
                }
            }
        }
        if let (Some(out), Some(ret)) = (it.outbound_legs.last(), it.return_legs.first()) {
            if ret.date < out.date {
                fail(
                    2,
                    format!("return {} departs before outbound {}", ret.date, out.date),
                );
            } else if ret.date == out.date {
                let out_arrival = out.arrival_abs_minutes();
                if out.arrive_next_day || (ret.depart_time as u32) < out_arrival + buffer {
                    fail(2, "return departs before the outbound trip lands".into());
                }
            }
        }
        for day in &it.daily_plan {
            if day.date < intents.depart_date
                || intents
                    .effective_return_date()
                    .is_some_and(|r| day.date > r)
            {
                fail(
                    2,
                    format!("daily plan on {} falls outside the trip window", day.date),
                );
            }
            for pair in day.visits.windows(2) {
                if pair[1].time < pair[0].time {
                    fail(2, format!("visits on {} are not time-ordered", day.date));
                }
            }
        }
        if cost_mismatch(it) {
            fail(
                2,
                format!(
                    "stated total {} does not match component sum {}",
                    it.total_cost_cents,
                    crate::domain::itinerary_cost(it)
                ),
            );
        }
    }

    fn check_constraints(
        &self,
        query: &Query,
        it: &Itinerary,
        fail: &mut impl FnMut(usize, String),
    ) {
        let intents = &query.intents;
        if let Some(budget) = intents.budget_total {
            if it.total_cost_cents > budget {
                fail(
                    3,
                    format!(
                        "total cost {} exceeds budget {}",
                        it.total_cost_cents, budget
                    ),
                );
            }
        }
        if let Some(deadline) = intents.arrival_deadline {
            if let Some(last) = it.outbound_legs.last() {
                if last.arrive_next_day || last.arrive_time > deadline {
                    fail(
                        3,
                        format!(
                            "arrival at {} misses the {} deadline",
                            last.arrive_time, deadline
                        ),
                    );
                }
            }
        }
    }

    fn check_specific(
        &self,
        query: &Query,
        trajectory: &Trajectory,
        it: &Itinerary,
        fail: &mut impl FnMut(usize, String),
    ) {
        let intents = &query.intents;
        if let Some(poi) = &intents.poi_requirement {
            let needle = poi.to_lowercase();
            let visited = it
                .daily_plan
                .iter()
                .flat_map(|d| &d.visits)
                .any(|v| v.name.to_lowercase().contains(&needle));
            if !visited {
                fail(
                    4,
                    format!("required POI \"{poi}\" missing from the daily plan"),
                );
            }
        }
        if let Some(pref) = &intents.hotel_preference {
            let needle = pref.to_lowercase();
            match &it.hotel_stay {
                Some(hotel) => {
                    let name_match = hotel.name.to_lowercase().contains(&needle);
                    // Tags are not part of the itinerary; consult the tool
                    // responses the hotel was cited from.
                    let tag_match = hotel_options(trajectory)
                        .iter()
                        .find(|o| o.id == hotel.record_id)
                        .is_some_and(|o| o.tags.iter().any(|t| t.contains(&needle)));
                    if !name_match && !tag_match {
                        fail(
                            4,
                            format!(
                                "hotel \"{}\" does not match preference \"{pref}\"",
                                hotel.name
                            ),
                        );
                    }
                }
                None => fail(
                    4,
                    format!("hotel preference \"{pref}\" but no hotel booked"),
                ),
            }
        }
        if let Some(mode) = intents.transport_mode_preference {
            let off_mode = it
                .outbound_legs
                .iter()
                .chain(&it.return_legs)
                .filter(|l| l.mode != mode)
                .count();
            if off_mode > 0 {
                fail(
                    4,
                    format!("{off_mode} leg(s) do not use the preferred {mode}"),
                );
            }
        }
    }

    /// Fine-grained per-turn check, run only after a trajectory-level pass.
    pub fn verify_turn(
        &self,
        query: &Query,
        trajectory: &Trajectory,
        turn_index: usize,
        itinerary: &Itinerary,
    ) -> TurnVerdict {
        let mut diagnostics = Vec::new();
        let turns = trajectory.turns();
        let Some((call_body, response_body)) = turns.get(turn_index).copied() else {
            return TurnVerdict {
                turn_index,
                call_logic_ok: false,
                consistency_ok: false,
                diagnostics: vec![format!("turn {turn_index} does not exist")],
            };
        };

        let call_logic_ok =
            self.check_call_logic(query, call_body, response_body, &mut diagnostics);
        let consistency_ok =
            self.check_consistency(trajectory, turn_index, itinerary, &mut diagnostics);
        TurnVerdict {
            turn_index,
            call_logic_ok,
            consistency_ok,
            diagnostics,
        }
    }

    fn check_call_logic(
        &self,
        query: &Query,
        call_body: &str,
        response_body: Option<&str>,
        diagnostics: &mut Vec<String>,
    ) -> bool {
        let intents = &query.intents;
        let call = match parse_tool_call(call_body) {
            Ok(call) => call,
            Err(e) => {
                diagnostics.push(format!("call does not parse: {e}"));
                return false;
            }
        };
        if let Some(response) = response_body.and_then(ToolResponse::from_body) {
            if !response.ok {
                diagnostics.push(format!(
                    "tool rejected the call: {}",
                    response.error.unwrap_or_default()
                ));
                return false;
            }
        }
        let ret_date = intents.effective_return_date();
        let mut ok = true;
        match call.name {
            ToolName::FlightSearch | ToolName::TrainSearch => {
                let depart = call.arg("depart_city").unwrap_or_default();
                let arrival = call.arg("arrival_city").unwrap_or_default();
                let date = call.arg("depart_date").unwrap_or_default();
                let outbound = depart.eq_ignore_ascii_case(&intents.origin)
                    && arrival.eq_ignore_ascii_case(&intents.destination);
                let inbound = depart.eq_ignore_ascii_case(&intents.destination)
                    && arrival.eq_ignore_ascii_case(&intents.origin);
                if !outbound && !inbound {
                    diagnostics.push(format!(
                        "transport search {depart}→{arrival} does not match the requested trip"
                    ));
                    ok = false;
                } else if outbound && date != intents.depart_date.to_string() {
                    diagnostics.push(format!(
                        "outbound searched for {date}, trip departs {}",
                        intents.depart_date
                    ));
                    ok = false;
                } else if inbound {
                    match ret_date {
                        Some(r) if date == r.to_string() => {}
                        Some(r) => {
                            diagnostics
                                .push(format!("return searched for {date}, trip returns {r}"));
                            ok = false;
                        }
                        None => {
                            diagnostics.push("return search on a one-way trip".into());
                            ok = false;
                        }
                    }
                }
            }
            ToolName::HotelSearch => {
                let city = call.arg("city_name").unwrap_or_default();
                if !city.eq_ignore_ascii_case(&intents.destination) {
                    diagnostics.push(format!(
                        "hotel searched in {city}, destination is {}",
                        intents.destination
                    ));
                    ok = false;
                }
                let checkin = call
                    .arg("checkin_date")
                    .unwrap_or_default()
                    .parse::<chrono::NaiveDate>();
                let checkout = call
                    .arg("checkout_date")
                    .unwrap_or_default()
                    .parse::<chrono::NaiveDate>();
                match (checkin, checkout, ret_date) {
                    (Ok(ci), Ok(co), Some(ret)) => {
                        if ci >= co {
                            diagnostics.push("hotel checkout does not follow checkin".into());
                            ok = false;
                        } else if ci < intents.depart_date || co > ret {
                            diagnostics.push("hotel dates fall outside the trip window".into());
                            ok = false;
                        }
                    }
                    (Ok(ci), Ok(co), None) => {
                        if ci >= co {
                            diagnostics.push("hotel checkout does not follow checkin".into());
                            ok = false;
                        }
                    }
                    _ => {
                        diagnostics.push("hotel dates do not parse".into());
                        ok = false;
                    }
                }
            }
            ToolName::PoiSearch | ToolName::RoutePlanning => {
                let city = call.arg("city_name").unwrap_or_default();
                if !city.eq_ignore_ascii_case(&intents.destination)
                    && !city.eq_ignore_ascii_case(&intents.origin)
                {
                    diagnostics.push(format!(
                        "{} in {city}, which is not on the trip",
                        call.name.as_str()
                    ));
                    ok = false;
                }
            }
            ToolName::WebSearch => {}
        }
        ok
    }

    /// Every itinerary fact attributable to this turn's response must appear
    /// verbatim there. A cited id found in no response of its tool type
    /// fails at the latest turn carrying that tool type.
    fn check_consistency(
        &self,
        trajectory: &Trajectory,
        turn_index: usize,
        itinerary: &Itinerary,
        diagnostics: &mut Vec<String>,
    ) -> bool {
        let turns = trajectory.turns();
        let parsed: Vec<Option<ToolResponse>> = turns
            .iter()
            .map(|(_, response)| response.and_then(ToolResponse::from_body))
            .collect();
        let mut ok = true;

        let latest_turn_of = |want_transport: bool, want_hotel: bool, want_poi: bool| -> usize {
            parsed
                .iter()
                .enumerate()
                .filter(|(_, r)| match r.as_ref().and_then(|r| r.data.as_ref()) {
                    Some(ToolData::Transport { .. }) => want_transport,
                    Some(ToolData::Hotels { .. }) => want_hotel,
                    Some(ToolData::Pois { .. }) => want_poi,
                    _ => false,
                })
                .map(|(i, _)| i)
                .next_back()
                .unwrap_or(turns.len().saturating_sub(1))
        };

        for leg in itinerary.outbound_legs.iter().chain(&itinerary.return_legs) {
            let turns_with_id: Vec<usize> = parsed
                .iter()
                .enumerate()
                .filter_map(|(i, r)| match r.as_ref().and_then(|r| r.data.as_ref()) {
                    Some(ToolData::Transport { options }) => {
                        options.iter().any(|o| o.id == leg.record_id).then_some(i)
                    }
                    _ => None,
                })
                .collect();
            if turns_with_id.is_empty() {
                if latest_turn_of(true, false, false) == turn_index {
                    diagnostics.push(format!(
                        "itinerary cites transport {} that appears in no tool response",
                        leg.record_id
                    ));
                    ok = false;
                }
            } else if turns_with_id.contains(&turn_index) {
                if let Some(ToolData::Transport { options }) =
                    parsed[turn_index].as_ref().and_then(|r| r.data.as_ref())
                {
                    let record = options.iter().find(|o| o.id == leg.record_id).unwrap();
                    let matches = record.mode == leg.mode
                        && record.origin == leg.origin
                        && record.destination == leg.destination
                        && record.date == leg.date
                        && record.depart_time == leg.depart_time
                        && record.arrive_time == leg.arrive_time
                        && record.arrive_next_day == leg.arrive_next_day
                        && record.price_cents == leg.price_cents;
                    if !matches {
                        diagnostics.push(format!(
                            "cited transport {} disagrees with the tool response",
                            leg.record_id
                        ));
                        ok = false;
                    }
                }
            }
        }

        if let Some(hotel) = &itinerary.hotel_stay {
            let turns_with_id: Vec<usize> = parsed
                .iter()
                .enumerate()
                .filter_map(|(i, r)| match r.as_ref().and_then(|r| r.data.as_ref()) {
                    Some(ToolData::Hotels { options }) => {
                        options.iter().any(|o| o.id == hotel.record_id).then_some(i)
                    }
                    _ => None,
                })
                .collect();
            if turns_with_id.is_empty() {
                if latest_turn_of(false, true, false) == turn_index {
                    diagnostics.push(format!(
                        "itinerary cites hotel {} that appears in no tool response",
                        hotel.record_id
                    ));
                    ok = false;
                }
            } else if turns_with_id.contains(&turn_index) {
                if let Some(ToolData::Hotels { options }) =
                    parsed[turn_index].as_ref().and_then(|r| r.data.as_ref())
                {
                    let record = options.iter().find(|o| o.id == hotel.record_id).unwrap();
                    let matches = record.name == hotel.name
                        && record.city.eq_ignore_ascii_case(&hotel.city)
                        && record.checkin == hotel.checkin
                        && record.checkout == hotel.checkout
                        && record.total_price_cents == hotel.total_price_cents;
                    if !matches {
                        diagnostics.push(format!(
                            "cited hotel {} disagrees with the tool response",
                            hotel.record_id
                        ));
                        ok = false;
                    }
                }
            }
        }

        for visit in itinerary.daily_plan.iter().flat_map(|d| &d.visits) {
            let turns_with_id: Vec<usize> = parsed
                .iter()
                .enumerate()
                .filter_map(|(i, r)| match r.as_ref().and_then(|r| r.data.as_ref()) {
                    Some(ToolData::Pois { matches }) => {
                        matches.iter().any(|p| p.id == visit.poi_id).then_some(i)
                    }
                    _ => None,
                })
                .collect();
            if turns_with_id.is_empty() {
                if latest_turn_of(false, false, true) == turn_index {
                    diagnostics.push(format!(
                        "daily plan cites POI {} that appears in no tool response",
                        visit.poi_id
                    ));
                    ok = false;
                }
            } else if turns_with_id.contains(&turn_index) {
                if let Some(ToolData::Pois { matches }) =
                    parsed[turn_index].as_ref().and_then(|r| r.data.as_ref())
                {
                    let record = matches.iter().find(|p| p.id == visit.poi_id).unwrap();
                    if record.name != visit.name {
                        diagnostics.push(format!(
                            "cited POI {} disagrees with the tool response",
                            visit.poi_id
                        ));
                        ok = false;
                    }
                }
            }
        }
        ok
    }
}

/// All hotel options mentioned anywhere in a trajectory's responses.
fn hotel_options(trajectory: &Trajectory) -> Vec<crate::sandbox::HotelOption> {
    let mut out = Vec::new();
    for (_, response) in trajectory.turns() {
        if let Some(ToolData::Hotels { options }) = response
            .and_then(ToolResponse::from_body)
            .and_then(|r| r.data)
        {
            out.extend(options);
        }
    }
    out
}

impl RewardModel for RuleVerifier {
    fn joint_reward(&self, query: &Query, trajectory: &Trajectory) -> RewardRecord {
        let start = Instant::now();
        let trajectory_verdict = self.verify_trajectory(query, trajectory);
        let trajectory_pass = self.config.force_trajectory_pass || trajectory_verdict.passes();

        let mut turn_verdicts = Vec::new();
        let mut all_turns_pass = true;
        if trajectory_pass && !self.config.force_turn_pass {
            self.turn_calls.fetch_add(1, Ordering::Relaxed);
            let itinerary = trajectory
                .answer_body()
                .and_then(|a| extract_itinerary(a).ok())
                .unwrap_or_default();
            for turn_index in 0..trajectory.tool_call_count() {
                let verdict = self.verify_turn(query, trajectory, turn_index, &itinerary);
                all_turns_pass &= verdict.passes();
                turn_verdicts.push(verdict);
            }
        }
        let r = u8::from(trajectory_pass && all_turns_pass);
        RewardRecord {
            trajectory_id: trajectory.query_id.clone(),
            r,
            trajectory_verdict,
            turn_verdicts: if trajectory_pass {
                turn_verdicts
            } else {
                Vec::new()
            },
            verifier_latency_ms: start.elapsed().as_millis() as u64,
            verifier_failed: false,
        }
    }
}
