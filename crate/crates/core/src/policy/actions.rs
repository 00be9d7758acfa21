//! Action templates and deterministic argument binding.
//!
//! The policy's action space is seven templates: one call per tool plus
//! "emit the answer". Argument binding is a pure function of the query and
//! the observations gathered so far, so a chosen template always expands to
//! the same tool call or answer. The answer builder assembles the structured
//! itinerary from candidate pools (capped at 8 per category) under a
//! selector strategy.

use crate::domain::{DayPlan, HotelStay, Itinerary, Leg, PoiVisit, Query, TransportMode};
use crate::protocol::{parse_tool_call, render_itinerary_block, Segment, SegmentKind};
use crate::sandbox::{HotelOption, PoiRecord, ToolData, ToolName, ToolResponse, TransportRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const TEMPLATE_COUNT: usize = 7;
/// Index of the EmitAnswer template.
pub const ANSWER_TEMPLATE: usize = 6;

/// Buffer between a leg's arrival and the next departure on the same day.
pub const TRANSFER_BUFFER_MIN: u32 = 60;

/// Candidate pool cap per category.
pub const POOL_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    CallFlight,
    CallTrain,
    CallHotel,
    CallRoute,
    CallPoi,
    CallWeb,
    EmitAnswer,
}

pub const TEMPLATE_KINDS: [TemplateKind; TEMPLATE_COUNT] = [
    TemplateKind::CallFlight,
    TemplateKind::CallTrain,
    TemplateKind::CallHotel,
    TemplateKind::CallRoute,
    TemplateKind::CallPoi,
    TemplateKind::CallWeb,
    TemplateKind::EmitAnswer,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSelector {
    Cheapest,
    Fastest,
    PreferenceMatched,
    FirstListed,
}

/// Deterministic selector rule: preferences dominate, then budget, then
/// deadline, then listing order.
pub fn selector_for(query: &Query) -> AnswerSelector {
    let intents = &query.intents;
    if intents.hotel_preference.is_some() || intents.transport_mode_preference.is_some() {
        AnswerSelector::PreferenceMatched
    } else if intents.budget_total.is_some() {
        AnswerSelector::Cheapest
    } else if intents.arrival_deadline.is_some() {
        AnswerSelector::Fastest
    } else {
        AnswerSelector::FirstListed
    }
}

/// Finite state features: the bucket indexes the logit table, the valid mask
/// shapes the softmax support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFeatures {
    pub bucket: u16,
    pub valid: [bool; TEMPLATE_COUNT],
}

/// Everything the policy has observed so far, reconstructed from segments.
#[derive(Debug, Clone, Default)]
pub struct GatheredState {
    pub outbound: Vec<TransportRecord>,
    pub return_options: Vec<TransportRecord>,
    pub hotels: Vec<HotelOption>,
    pub pois: Vec<PoiRecord>,
    pub outbound_modes_called: BTreeSet<TransportMode>,
    pub return_modes_called: BTreeSet<TransportMode>,
    pub hotel_called: bool,
    pub poi_called: bool,
    pub route_called: bool,
    pub web_called: bool,
    pub last_response_ok: Option<bool>,
    pub turn: usize,
}

fn push_capped<T: Clone>(pool: &mut Vec<T>, item: &T, id: impl Fn(&T) -> &str) {
    if pool.len() >= POOL_CAP {
        return;
    }
    let new_id = id(item);
    if pool.iter().any(|existing| id(existing) == new_id) {
        return;
    }
    pool.push(item.clone());
}

impl GatheredState {
    pub fn from_segments(query: &Query, segments: &[Segment]) -> GatheredState {
        let mut state = GatheredState::default();
        let intents = &query.intents;
        for (i, segment) in segments.iter().enumerate() {
            if segment.kind != SegmentKind::ToolCall {
                continue;
            }
            state.turn += 1;
            let Some(response_segment) = segments.get(i + 1) else {
                continue;
            };
            if response_segment.kind != SegmentKind::ToolResponse {
                continue;
            }
            let response = ToolResponse::from_body(&response_segment.body);
            state.last_response_ok = response.as_ref().map(|r| r.ok);
            let Ok(call) = parse_tool_call(&segment.body) else {
                continue;
            };
            match call.name {
                ToolName::FlightSearch | ToolName::TrainSearch => {
                    let mode = if call.name == ToolName::FlightSearch {
                        TransportMode::Flight
                    } else {
                        TransportMode::Train
                    };
                    let depart = call.arg("depart_city").unwrap_or_default();
                    let arrival = call.arg("arrival_city").unwrap_or_default();
                    let outbound_dir = depart.eq_ignore_ascii_case(&intents.origin)
                        && arrival.eq_ignore_ascii_case(&intents.destination);
                    let return_dir = depart.eq_ignore_ascii_case(&intents.destination)
                        && arrival.eq_ignore_ascii_case(&intents.origin);
                    if outbound_dir {
                        state.outbound_modes_called.insert(mode);
                    } else if return_dir {
                        state.return_modes_called.insert(mode);
                    }
                    if let Some(ToolData::Transport { options }) = response.and_then(|r| r.data) {
                        for option in &options {
                            if outbound_dir {
                                push_capped(&mut state.outbound, option, |t| &t.id);
                            } else if return_dir {
                                push_capped(&mut state.return_options, option, |t| &t.id);
                            }
                        }
                    }
                }
                ToolName::HotelSearch => {
                    state.hotel_called = true;
                    if let Some(ToolData::Hotels { options }) = response.and_then(|r| r.data) {
                        for option in &options {
                            push_capped(&mut state.hotels, option, |h| &h.id);
                        }
                    }
                }
                ToolName::PoiSearch => {
                    state.poi_called = true;
                    if let Some(ToolData::Pois { matches }) = response.and_then(|r| r.data) {
                        for poi in &matches {
                            push_capped(&mut state.pois, poi, |p| &p.id);
                        }
                    }
                }
                ToolName::RoutePlanning => state.route_called = true,
                ToolName::WebSearch => state.web_called = true,
            }
        }
        state
    }

    fn round_trip(&self, query: &Query) -> bool {
        query.intents.effective_return_date().is_some()
    }

    fn outbound_exhausted(&self) -> bool {
        self.outbound_modes_called.len() >= 2
    }

    fn return_exhausted(&self) -> bool {
        self.return_modes_called.len() >= 2
    }

    /// Some direction still has no options and untried modes remain.
    pub fn transport_pending(&self, query: &Query) -> bool {
        (self.outbound.is_empty() && !self.outbound_exhausted())
            || (self.round_trip(query)
                && self.return_options.is_empty()
                && !self.return_exhausted())
    }

    pub fn hotel_pending(&self, query: &Query) -> bool {
        query.intents.nights() >= 1 && !self.hotel_called
    }

    pub fn poi_pending(&self, query: &Query) -> bool {
        query.intents.poi_requirement.is_some() && !self.poi_called
    }
}

/// Compute the feature bucket and valid-template mask for the current state.
pub fn features(query: &Query, state: &GatheredState) -> StateFeatures {
    let intents = &query.intents;
    let turn_bucket: u16 = match state.turn {
        0 => 0,
        1 => 1,
        2 | 3 => 2,
        _ => 3,
    };
    let transport_pending = state.transport_pending(query) as u16;
    let hotel_pending = state.hotel_pending(query) as u16;
    let poi_pending = state.poi_pending(query) as u16;
    let mode_pref: u16 = match intents.transport_mode_preference {
        None => 0,
        Some(TransportMode::Flight) => 1,
        Some(TransportMode::Train) => 2,
    };
    let other_constraint = (intents.budget_total.is_some()
        || intents.hotel_preference.is_some()
        || intents.arrival_deadline.is_some()) as u16;
    let last_error = matches!(state.last_response_ok, Some(false)) as u16;

    let mut bucket = turn_bucket;
    bucket = bucket * 2 + transport_pending;
    bucket = bucket * 2 + hotel_pending;
    bucket = bucket * 2 + poi_pending;
    bucket = bucket * 3 + mode_pref;
    bucket = bucket * 2 + other_constraint;
    bucket = bucket * 2 + last_error;

    let round = state.round_trip(query);
    let mut valid = [false; TEMPLATE_COUNT];
    valid[0] = !state.outbound_modes_called.contains(&TransportMode::Flight)
        || (round && !state.return_modes_called.contains(&TransportMode::Flight));
    valid[1] = !state.outbound_modes_called.contains(&TransportMode::Train)
        || (round && !state.return_modes_called.contains(&TransportMode::Train));
    valid[2] = intents.nights() >= 1 && !state.hotel_called;
    valid[3] = !state.route_called && (!state.pois.is_empty() || !state.hotels.is_empty());
    valid[4] = !state.poi_called;
    valid[5] = !state.web_called;
    valid[ANSWER_TEMPLATE] = true;

    StateFeatures { bucket, valid }
}

/// Total number of distinct feature buckets (enumerable, a few hundred).
pub fn bucket_space() -> u16 {
    4 * 2 * 2 * 2 * 3 * 2 * 2
}

/// Expand a template into `(thought, action)` at the current state. Returns
/// `None` when the template cannot bind (callers treat that as forced
/// answer).
pub fn bind_template(
    template: usize,
    query: &Query,
    state: &GatheredState,
) -> Option<(String, crate::protocol::AgentAction)> {
    use crate::protocol::AgentAction;
    let intents = &query.intents;
    let ret_date = intents.effective_return_date();
    match TEMPLATE_KINDS.get(template)? {
        TemplateKind::CallFlight | TemplateKind::CallTrain => {
            let (mode, tool) = if TEMPLATE_KINDS[template] == TemplateKind::CallFlight {
                (TransportMode::Flight, "flight_search")
            } else {
                (TransportMode::Train, "train_search")
            };
            let outbound_open = !state.outbound_modes_called.contains(&mode);
            let (from, to, date) = if outbound_open {
                (&intents.origin, &intents.destination, intents.depart_date)
            } else if ret_date.is_some() && !state.return_modes_called.contains(&mode) {
                (&intents.destination, &intents.origin, ret_date.unwrap())
            } else {
                return None;
            };
            let thought = format!("Searching {mode} options from {from} to {to} on {date}.");
            let body = format!(
                "{tool}(depart_city=\"{from}\", arrival_city=\"{to}\", depart_date=\"{date}\")"
            );
            Some((thought, AgentAction::ToolCall(body)))
        }
        TemplateKind::CallHotel => {
            let checkout = ret_date?;
            if intents.nights() < 1 {
                return None;
            }
            let city = &intents.destination;
            let thought = format!(
                "Looking for hotels in {city} from {} to {checkout}.",
                intents.depart_date
            );
            let body = format!(
                "hotel_search(city_name=\"{city}\", checkin_date=\"{}\", checkout_date=\"{checkout}\")",
                intents.depart_date
            );
            Some((thought, AgentAction::ToolCall(body)))
        }
        TemplateKind::CallRoute => {
            let origin = state
                .hotels
                .first()
                .map(|h| h.name.clone())
                .or_else(|| state.pois.first().map(|p| p.name.clone()))?;
            let destination = intents
                .poi_requirement
                .clone()
                .or_else(|| state.pois.first().map(|p| p.name.clone()))
                .unwrap_or_else(|| origin.clone());
            let city = &intents.destination;
            let thought =
                format!("Checking the route from {origin} to {destination} within {city}.");
            let body = format!(
                "route_planning(origin=\"{origin}\", destination=\"{destination}\", city_name=\"{city}\")"
            );
            Some((thought, AgentAction::ToolCall(body)))
        }
        TemplateKind::CallPoi => {
            let target = intents.poi_requirement.clone().unwrap_or_default();
            let city = &intents.destination;
            let thought = if target.is_empty() {
                format!("Listing points of interest in {city}.")
            } else {
                format!("Finding the address of {target} in {city}.")
            };
            let body = format!("poi_search(query=\"{target}\", city_name=\"{city}\")");
            Some((thought, AgentAction::ToolCall(body)))
        }
        TemplateKind::CallWeb => {
            let city = &intents.destination;
            let thought = format!("Reading background information about {city}.");
            let body = format!("web_search(query=\"Introduction to {city}\")");
            Some((thought, AgentAction::ToolCall(body)))
        }
        TemplateKind::EmitAnswer => {
            let selector = selector_for(query);
            let (itinerary, body) = build_answer(query, state, selector);
            let thought = format!(
                "I have gathered enough information ({} transport, {} hotel candidates); composing the plan.",
                itinerary.outbound_legs.len() + itinerary.return_legs.len(),
                state.hotels.len()
            );
            Some((thought, AgentAction::Answer(body)))
        }
    }
}

// ---------------------------------------------------------------------------
// Answer construction
// ---------------------------------------------------------------------------

/// Exhaustive check over the gathered pools for one combination meeting
/// every hard constraint (mode/hotel preferences strict, seats available,
/// deadline, chronology, budget, required POI present). Shared by the
/// datagen feasibility witness and the oracle's reflection step.
pub fn satisfying_combo_exists(query: &Query, state: &GatheredState) -> bool {
    let intents = &query.intents;
    let nights = intents.nights();
    let round = intents.effective_return_date().is_some();

    if let Some(poi) = &intents.poi_requirement {
        let needle = poi.to_lowercase();
        if !state
            .pois
            .iter()
            .any(|p| p.name.to_lowercase().contains(&needle))
        {
            return false;
        }
    }

    let mode_ok = |t: &TransportRecord| {
        intents
            .transport_mode_preference
            .is_none_or(|m| t.mode == m)
            && t.seats_available >= 1
    };
    let outs: Vec<&TransportRecord> = state
        .outbound
        .iter()
        .filter(|t| mode_ok(t))
        .filter(|t| {
            intents
                .arrival_deadline
                .is_none_or(|d| !t.arrive_next_day && t.arrive_time <= d)
        })
        .filter(|t| nights == 0 || !t.arrive_next_day)
        .collect();
    if outs.is_empty() {
        return false;
    }
    let rets: Vec<&TransportRecord> = state.return_options.iter().filter(|t| mode_ok(t)).collect();
    if round && rets.is_empty() {
        return false;
    }
    let hotels: Vec<&HotelOption> = state
        .hotels
        .iter()
        .filter(|h| {
            intents.hotel_preference.as_ref().is_none_or(|pref| {
                let needle = pref.to_lowercase();
                h.name.to_lowercase().contains(&needle)
                    || h.tags.iter().any(|t| t.contains(&needle))
            })
        })
        .collect();
    if nights >= 1 && hotels.is_empty() {
        return false;
    }

    let ret_slots: Vec<Option<&TransportRecord>> = if round {
        rets.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let hotel_slots: Vec<Option<&HotelOption>> = if nights >= 1 {
        hotels.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    for out in &outs {
        for ret in &ret_slots {
            for hotel in &hotel_slots {
                if let Some(ret) = ret {
                    if out.date == ret.date {
                        let arrival =
                            out.arrive_time as u32 + if out.arrive_next_day { 1440 } else { 0 };
                        if (ret.depart_time as u32) < arrival + TRANSFER_BUFFER_MIN {
                            continue;
                        }
                    }
                }
                let cost = out.price_cents
                    + ret.map_or(0, |t| t.price_cents)
                    + hotel.map_or(0, |h| h.total_price_cents);
                if intents.budget_total.is_none_or(|b| cost <= b) {
                    return true;
                }
            }
        }
    }
    false
}

fn hhmm(minutes: u16) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

fn yuan(cents: i64) -> String {
    format!("{}.{:02}", cents / 100, (cents % 100).abs())
}

fn duration_min(record: &TransportRecord) -> u32 {
    record.arrive_time as u32 + if record.arrive_next_day { 1440 } else { 0 }
        - record.depart_time as u32
}

fn leg_from(record: &TransportRecord) -> Leg {
    Leg {
        record_id: record.id.clone(),
        mode: record.mode,
        origin: record.origin.clone(),
        destination: record.destination.clone(),
        date: record.date,
        depart_time: record.depart_time,
        arrive_time: record.arrive_time,
        arrive_next_day: record.arrive_next_day,
        price_cents: record.price_cents,
    }
}

/// Build the structured itinerary plus the markdown answer body from the
/// gathered candidate pools under a selector strategy. Missing candidates
/// yield a best-effort partial plan; the verifier decides what it is worth.
pub fn build_answer(
    query: &Query,
    state: &GatheredState,
    selector: AnswerSelector,
) -> (Itinerary, String) {
    let intents = &query.intents;
    let nights = intents.nights();
    let ret_date = intents.effective_return_date();
    let round = ret_date.is_some();

    let seat_filter = |pool: &[TransportRecord]| -> Vec<TransportRecord> {
        let seated: Vec<TransportRecord> = pool
            .iter()
            .filter(|t| t.seats_available >= 1)
            .cloned()
            .collect();
        if seated.is_empty() {
            pool.to_vec()
        } else {
            seated
        }
    };
    let mode_filter = |pool: Vec<TransportRecord>| -> Vec<TransportRecord> {
        match intents.transport_mode_preference {
            Some(mode) => {
                let matching: Vec<TransportRecord> =
                    pool.iter().filter(|t| t.mode == mode).cloned().collect();
                if matching.is_empty() {
                    pool
                } else {
                    matching
                }
            }
            None => pool,
        }
    };
    let mut out_pool = mode_filter(seat_filter(&state.outbound));
    if let Some(deadline) = intents.arrival_deadline {
        let on_time: Vec<TransportRecord> = out_pool
            .iter()
            .filter(|t| !t.arrive_next_day && t.arrive_time <= deadline)
            .cloned()
            .collect();
        if !on_time.is_empty() {
            out_pool = on_time;
        }
    }
    if nights >= 1 {
        // Checking in on the arrival day: prefer same-day arrivals.
        let same_day: Vec<TransportRecord> = out_pool
            .iter()
            .filter(|t| !t.arrive_next_day)
            .cloned()
            .collect();
        if !same_day.is_empty() {
            out_pool = same_day;
        }
    }
    let ret_pool = if round {
        mode_filter(seat_filter(&state.return_options))
    } else {
        Vec::new()
    };
    let hotel_pool: Vec<HotelOption> = if nights >= 1 {
        match &intents.hotel_preference {
            Some(pref) => {
                let needle = pref.to_lowercase();
                let matching: Vec<HotelOption> = state
                    .hotels
                    .iter()
                    .filter(|h| {
                        h.name.to_lowercase().contains(&needle)
                            || h.tags.iter().any(|t| t.contains(&needle))
                    })
                    .cloned()
                    .collect();
                if matching.is_empty() {
                    state.hotels.clone()
                } else {
                    matching
                }
            }
            None => state.hotels.clone(),
        }
    } else {
        Vec::new()
    };

    // Exhaustive selection over the capped pools: minimize violations first,
    // then the selector metric, with stable id tie-breaks.
    let outs: Vec<Option<&TransportRecord>> = if out_pool.is_empty() {
        vec![None]
    } else {
        out_pool.iter().map(Some).collect()
    };
    let rets: Vec<Option<&TransportRecord>> = if !round || ret_pool.is_empty() {
        vec![None]
    } else {
        ret_pool.iter().map(Some).collect()
    };
    let hotels: Vec<Option<&HotelOption>> = if nights < 1 || hotel_pool.is_empty() {
        vec![None]
    } else {
        hotel_pool.iter().map(Some).collect()
    };

    type Combo<'a> = (Option<&'a TransportRecord>, Option<&'a TransportRecord>, Option<&'a HotelOption>);
    let mut best: Option<((u32, i64, String), Combo)> = None;
    for (oi, out) in outs.iter().enumerate() {
        for (ri, ret) in rets.iter().enumerate() {
            for (hi, hotel) in hotels.iter().enumerate() {
                let mut violations = 0u32;
                let cost = out.map_or(0, |t| t.price_cents)
                    + ret.map_or(0, |t| t.price_cents)
                    + hotel.map_or(0, |h| h.total_price_cents);
                if let Some(budget) = intents.budget_total {
                    if cost > budget {
                        violations += 1;
                    }
                }
                if let (Some(deadline), Some(out)) = (intents.arrival_deadline, out) {
                    if out.arrive_next_day || out.arrive_time > deadline {
                        violations += 1;
                    }
                }
                if let (Some(out), Some(ret)) = (out, ret) {
                    if out.date == ret.date {
                        let out_arrival =
                            out.arrive_time as u32 + if out.arrive_next_day { 1440 } else { 0 };
                        if (ret.depart_time as u32) < out_arrival + TRANSFER_BUFFER_MIN {
                            violations += 1;
                        }
                    }
                }
                if nights >= 1 {
                    if let Some(out) = out {
                        if out.arrive_next_day {
                            violations += 1;
                        }
                    }
                }
                let metric = match selector {
                    AnswerSelector::Cheapest | AnswerSelector::PreferenceMatched => cost,
                    AnswerSelector::Fastest => {
                        (out.map_or(0, duration_min) + ret.map_or(0, duration_min)) as i64
                    }
                    AnswerSelector::FirstListed => (oi * 100 + ri * 10 + hi) as i64,
                };
                let tiebreak = format!(
                    "{}|{}|{}",
                    out.map_or("", |t| t.id.as_str()),
                    ret.map_or("", |t| t.id.as_str()),
                    hotel.map_or("", |h| h.id.as_str())
                );
                let key = (violations, metric, tiebreak);
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, (*out, *ret, *hotel)));
                }
            }
        }
    }
    let (out, ret, hotel) = best.map(|(_, combo)| combo).unwrap_or((None, None, None));

    let hotel_stay = hotel.map(|h| HotelStay {
        record_id: h.id.clone(),
        name: h.name.clone(),
        city: h.city.clone(),
        checkin: h.checkin,
        checkout: h.checkout,
        total_price_cents: h.total_price_cents,
    });

    // Daily plan: the required POI (when gathered) goes on the first full
    // day; a second candidate fills out the schedule.
    let mut daily_plan: Vec<DayPlan> = Vec::new();
    let required_poi = intents.poi_requirement.as_ref().and_then(|name| {
        let needle = name.to_lowercase();
        state
            .pois
            .iter()
            .find(|p| p.name.to_lowercase().contains(&needle))
    });
    let extra_poi = state
        .pois
        .iter()
        .find(|p| required_poi.is_none_or(|r| r.id != p.id));
    if required_poi.is_some() || extra_poi.is_some() {
        let plan_date = if nights >= 1 {
            intents.depart_date + chrono::Days::new(1)
        } else {
            intents.depart_date
        };
        let mut visits = Vec::new();
        if let Some(p) = required_poi {
            visits.push(PoiVisit {
                poi_id: p.id.clone(),
                name: p.name.clone(),
                time: 600,
            });
        }
        if let Some(p) = extra_poi {
            if visits.len() < 2 {
                visits.push(PoiVisit {
                    poi_id: p.id.clone(),
                    name: p.name.clone(),
                    time: 900,
                });
            }
        }
        daily_plan.push(DayPlan {
            date: plan_date,
            visits,
        });
    }

    let mut itinerary = Itinerary {
        outbound_legs: out.map(|t| vec![leg_from(t)]).unwrap_or_default(),
        hotel_stay,
        return_legs: ret.map(|t| vec![leg_from(t)]).unwrap_or_default(),
        daily_plan,
        total_cost_cents: 0,
    };
    itinerary.total_cost_cents = crate::domain::itinerary_cost(&itinerary);

    let body = render_answer_markdown(query, state, &itinerary, &out_pool, &ret_pool, &hotel_pool);
    (itinerary, body)
}

fn transport_line(record: &TransportRecord) -> String {
    format!(
        "- **{}** {} ({} → {}) departs {}, arrives {}{}, {} CNY, {} seats left",
        record.id,
        record.mode,
        record.origin,
        record.destination,
        hhmm(record.depart_time),
        hhmm(record.arrive_time),
        if record.arrive_next_day {
            " (+1 day)"
        } else {
            ""
        },
        yuan(record.price_cents),
        record.seats_available
    )
}

fn render_answer_markdown(
    query: &Query,
    state: &GatheredState,
    itinerary: &Itinerary,
    out_pool: &[TransportRecord],
    ret_pool: &[TransportRecord],
    hotel_pool: &[HotelOption],
) -> String {
    let intents = &query.intents;
    let mut md = String::new();
    md.push_str(&format!(
        "Based on your request, here is a trip plan from {} to {} departing {}",
        intents.origin, intents.destination, intents.depart_date
    ));
    if let Some(ret) = intents.effective_return_date() {
        md.push_str(&format!(" and returning {ret}"));
    }
    md.push_str(".\n\n");

    md.push_str(&format!(
        "### Outbound Recommendations ({})\n",
        intents.depart_date
    ));
    if let Some(leg) = itinerary.outbound_legs.first() {
        let chosen = out_pool.iter().find(|t| t.id == leg.record_id);
        if let Some(t) = chosen {
            md.push_str(&transport_line(t));
            md.push('\n');
        }
        if let Some(alt) = out_pool.iter().find(|t| t.id != leg.record_id) {
            md.push_str("- Alternative: ");
            md.push_str(transport_line(alt).trim_start_matches("- "));
            md.push('\n');
        }
    } else {
        md.push_str("- No bookable option was found for this direction.\n");
    }

    if let Some(hotel) = &itinerary.hotel_stay {
        md.push_str("\n### Hotel Recommendation\n");
        md.push_str(&format!(
            "- **{}** ({}), {} to {}, total {} CNY\n",
            hotel.name,
            hotel.record_id,
            hotel.checkin,
            hotel.checkout,
            yuan(hotel.total_price_cents)
        ));
        if let Some(alt) = hotel_pool.iter().find(|h| h.id != hotel.record_id) {
            md.push_str(&format!(
                "- Alternative: **{}** ({}), total {} CNY\n",
                alt.name,
                alt.id,
                yuan(alt.total_price_cents)
            ));
        }
    }

    if intents.effective_return_date().is_some() {
        md.push_str(&format!(
            "\n### Return Recommendations ({})\n",
            intents.effective_return_date().unwrap()
        ));
        if let Some(leg) = itinerary.return_legs.first() {
            if let Some(t) = ret_pool.iter().find(|t| t.id == leg.record_id) {
                md.push_str(&transport_line(t));
                md.push('\n');
            }
            if let Some(alt) = ret_pool.iter().find(|t| t.id != leg.record_id) {
                md.push_str("- Alternative: ");
                md.push_str(transport_line(alt).trim_start_matches("- "));
                md.push('\n');
            }
        } else {
            md.push_str("- No bookable option was found for this direction.\n");
        }
    }

    if !itinerary.daily_plan.is_empty() {
        md.push_str("\n### Daily Plan\n");
        for day in &itinerary.daily_plan {
            for visit in &day.visits {
                md.push_str(&format!(
                    "- {}: visit {} at {}\n",
                    day.date,
                    visit.name,
                    hhmm(visit.time)
                ));
            }
        }
    }

    md.push_str(&format!(
        "\nEstimated total cost: {} CNY.\n",
        yuan(itinerary.total_cost_cents)
    ));
    md.push_str("\n**Friendly Tips**:\n");
    md.push_str("1. Book your airport or station transfer in advance.\n");
    md.push_str("2. If plans change, the alternative options above keep the schedule intact.\n");
    if state.last_response_ok == Some(false) {
        md.push_str("3. One tool lookup failed; double-check availability before booking.\n");
    }
    md.push('\n');
    md.push_str(&render_itinerary_block(itinerary));
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::IntentSet;

    fn query(pref: Option<TransportMode>) -> Query {
        Query::from_intents(IntentSet {
            origin: "Shanghai".into(),
            destination: "Beijing".into(),
            depart_date: "2025-06-21".parse().unwrap(),
            return_date: None,
            trip_length_days: Some(2),
            arrival_deadline: None,
            budget_total: None,
            hotel_preference: None,
            transport_mode_preference: pref,
            poi_requirement: None,
        })
        .unwrap()
    }

    #[test]
    fn valid_template_counts_by_state() {
        let q = query(None);
        // Fresh state: route planning has no endpoints yet, everything else
        // is open.
        let state = GatheredState::default();
        let f = features(&q, &state);
        assert_eq!(f.valid.iter().filter(|&&v| v).count(), TEMPLATE_COUNT - 1);
        assert!(!f.valid[3]);
        assert!(f.bucket < bucket_space());
        // Once a POI is known all seven templates are valid.
        let mut with_poi = GatheredState::default();
        with_poi.pois.push(crate::sandbox::PoiRecord {
            id: "POI-X-00".into(),
            name: "Somewhere".into(),
            city: "Beijing".into(),
            address: "1 Road".into(),
            lat: 0.0,
            lon: 0.0,
            category: "landmark".into(),
        });
        let f = features(&q, &with_poi);
        assert_eq!(f.valid.iter().filter(|&&v| v).count(), TEMPLATE_COUNT);
    }

    #[test]
    fn flight_binding_switches_to_return_direction() {
        let q = query(None);
        let mut state = GatheredState::default();
        let (_, action) = bind_template(0, &q, &state).unwrap();
        let crate::protocol::AgentAction::ToolCall(body) = action else {
            panic!()
        };
        assert!(body.contains("depart_city=\"Shanghai\""));
        assert!(body.contains("2025-06-21"));

        state.outbound_modes_called.insert(TransportMode::Flight);
        let (_, action) = bind_template(0, &q, &state).unwrap();
        let crate::protocol::AgentAction::ToolCall(body) = action else {
            panic!()
        };
        assert!(body.contains("depart_city=\"Beijing\""));
        assert!(body.contains("2025-06-23"));

        state.return_modes_called.insert(TransportMode::Flight);
        assert!(bind_template(0, &q, &state).is_none());
        assert!(!features(&q, &state).valid[0]);
    }

    #[test]
    fn selector_rule_priority() {
        let mut q = query(Some(TransportMode::Train));
        assert_eq!(selector_for(&q), AnswerSelector::PreferenceMatched);
        q.intents.transport_mode_preference = None;
        q.intents.budget_total = Some(100);
        assert_eq!(selector_for(&q), AnswerSelector::Cheapest);
        q.intents.budget_total = None;
        q.intents.arrival_deadline = Some(900);
        assert_eq!(selector_for(&q), AnswerSelector::Fastest);
        q.intents.arrival_deadline = None;
        assert_eq!(selector_for(&q), AnswerSelector::FirstListed);
    }

    #[test]
    fn empty_pools_build_best_effort_answer() {
        let q = query(None);
        let (itinerary, body) =
            build_answer(&q, &GatheredState::default(), AnswerSelector::FirstListed);
        assert!(itinerary.outbound_legs.is_empty());
        assert!(body.contains("Friendly Tips"));
        assert!(crate::protocol::extract_itinerary(&body).is_ok());
    }

    #[test]
    fn cheapest_selector_minimizes_cost() {
        let q = {
            let mut q = query(None);
            q.intents.budget_total = Some(1_000_000);
            q
        };
        let mk = |id: &str, price: i64| TransportRecord {
            id: id.into(),
            mode: TransportMode::Flight,
            origin: "Shanghai".into(),
            destination: "Beijing".into(),
            date: "2025-06-21".parse().unwrap(),
            depart_time: 480,
            arrive_time: 610,
            arrive_next_day: false,
            price_cents: price,
            seats_available: 3,
        };
        let state = GatheredState {
            outbound: vec![mk("F1", 90_000), mk("F2", 50_000), mk("F3", 70_000)],
            ..GatheredState::default()
        };
        let (itinerary, _) = build_answer(&q, &state, AnswerSelector::Cheapest);
        assert_eq!(itinerary.outbound_legs[0].record_id, "F2");
    }
}
