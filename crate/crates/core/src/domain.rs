//! Queries, atomic intents, and the structured itinerary.
//!
//! A user request is a set of typed intent slots (origin, destination, dates,
//! optional constraints). The itinerary is the structured final plan the
//! policy emits inside its answer and the verifier checks record-by-record.
//! All money is integer cents so budget comparisons are exact.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Flight,
    Train,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportMode::Flight => write!(f, "flight"),
            TransportMode::Train => write!(f, "train"),
        }
    }
}

/// One typed intent slot with its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "slot", content = "value", rename_all = "snake_case")]
pub enum AtomicIntent {
    Origin(String),
    Destination(String),
    DepartDate(NaiveDate),
    ReturnDate(NaiveDate),
    /// Latest acceptable arrival at the destination, minutes-of-day on the
    /// departure date.
    ArrivalDeadline(u16),
    /// Total trip budget in cents.
    BudgetTotal(i64),
    /// Hotel brand substring or amenity tag (e.g. "riverside").
    HotelPreference(String),
    TransportModePreference(TransportMode),
    /// A POI the daily plan must include.
    PoiRequirement(String),
    TripLengthDays(u32),
}

impl AtomicIntent {
    /// Stable slot name, used for duplicate detection and canonical ids.
    pub fn slot(&self) -> &'static str {
        match self {
            AtomicIntent::Origin(_) => "origin",
            AtomicIntent::Destination(_) => "destination",
            AtomicIntent::DepartDate(_) => "depart_date",
            AtomicIntent::ReturnDate(_) => "return_date",
            AtomicIntent::ArrivalDeadline(_) => "arrival_deadline",
            AtomicIntent::BudgetTotal(_) => "budget_total",
            AtomicIntent::HotelPreference(_) => "hotel_preference",
            AtomicIntent::TransportModePreference(_) => "transport_mode_preference",
            AtomicIntent::PoiRequirement(_) => "poi_requirement",
            AtomicIntent::TripLengthDays(_) => "trip_length_days",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IntentError {
    #[error("duplicate intent slot: {0}")]
    DuplicateSlot(&'static str),
    #[error("missing required intent slot: {0}")]
    MissingSlot(&'static str),
    #[error("origin and destination must differ")]
    SameEndpoints,
    #[error("return date {ret} precedes depart date {depart}")]
    ReturnBeforeDepart { depart: NaiveDate, ret: NaiveDate },
    #[error("return date and trip length disagree")]
    InconsistentLength,
}

/// The resolved slot view of a query. Origin, destination, and depart date
/// are always present; everything else is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSet {
    pub origin: String,
    pub destination: String,
    pub depart_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trip_length_days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_deadline: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_total: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hotel_preference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_mode_preference: Option<TransportMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poi_requirement: Option<String>,
}

impl IntentSet {
    /// Assemble from a list of atomic intents, enforcing at most one value
    /// per slot and presence of the three mandatory slots.
    pub fn from_intents(intents: &[AtomicIntent]) -> Result<Self, IntentError> {
        let mut seen: Vec<&'static str> = Vec::new();
        let mut origin = None;
        let mut destination = None;
        let mut depart_date = None;
        let mut set = IntentSet {
            origin: String::new(),
            destination: String::new(),
            depart_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            return_date: None,
            trip_length_days: None,
            arrival_deadline: None,
            budget_total: None,
            hotel_preference: None,
            transport_mode_preference: None,
            poi_requirement: None,
        };
        for intent in intents {
            let slot = intent.slot();
            if seen.contains(&slot) {
                return Err(IntentError::DuplicateSlot(slot));
            }
            seen.push(slot);
            match intent.clone() {
                AtomicIntent::Origin(v) => origin = Some(v),
                AtomicIntent::Destination(v) => destination = Some(v),
                AtomicIntent::DepartDate(v) => depart_date = Some(v),
                AtomicIntent::ReturnDate(v) => set.return_date = Some(v),
                AtomicIntent::ArrivalDeadline(v) => set.arrival_deadline = Some(v),
                AtomicIntent::BudgetTotal(v) => set.budget_total = Some(v),
                AtomicIntent::HotelPreference(v) => set.hotel_preference = Some(v),
                AtomicIntent::TransportModePreference(v) => set.transport_mode_preference = Some(v),
                AtomicIntent::PoiRequirement(v) => set.poi_requirement = Some(v),
                AtomicIntent::TripLengthDays(v) => set.trip_length_days = Some(v),
            }
        }
        set.origin = origin.ok_or(IntentError::MissingSlot("origin"))?;
        set.destination = destination.ok_or(IntentError::MissingSlot("destination"))?;
        set.depart_date = depart_date.ok_or(IntentError::MissingSlot("depart_date"))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), IntentError> {
        if self.origin.eq_ignore_ascii_case(&self.destination) {
            return Err(IntentError::SameEndpoints);
        }
        if let Some(ret) = self.return_date {
            if ret < self.depart_date {
                return Err(IntentError::ReturnBeforeDepart {
                    depart: self.depart_date,
                    ret,
                });
            }
            if let Some(len) = self.trip_length_days {
                if self.depart_date + chrono::Days::new(len as u64) != ret {
                    return Err(IntentError::InconsistentLength);
                }
            }
        }
        Ok(())
    }

    /// Explode back into atomic intents, in a fixed slot order.
    pub fn intents(&self) -> Vec<AtomicIntent> {
        let mut out = vec![
            AtomicIntent::Origin(self.origin.clone()),
            AtomicIntent::Destination(self.destination.clone()),
            AtomicIntent::DepartDate(self.depart_date),
        ];
        if let Some(v) = self.return_date {
            out.push(AtomicIntent::ReturnDate(v));
        }
        if let Some(v) = self.trip_length_days {
            out.push(AtomicIntent::TripLengthDays(v));
        }
        if let Some(v) = self.arrival_deadline {
            out.push(AtomicIntent::ArrivalDeadline(v));
        }
        if let Some(v) = self.budget_total {
            out.push(AtomicIntent::BudgetTotal(v));
        }
        if let Some(v) = &self.hotel_preference {
            out.push(AtomicIntent::HotelPreference(v.clone()));
        }
        if let Some(v) = self.transport_mode_preference {
            out.push(AtomicIntent::TransportModePreference(v));
        }
        if let Some(v) = &self.poi_requirement {
            out.push(AtomicIntent::PoiRequirement(v.clone()));
        }
        out
    }

    /// Return date implied by either the explicit slot or the trip length.
    /// `None` means a one-way request.
    pub fn effective_return_date(&self) -> Option<NaiveDate> {
        self.return_date.or_else(|| {
            self.trip_length_days
                .map(|d| self.depart_date + chrono::Days::new(d as u64))
        })
    }

    /// Hotel nights implied by the trip window (0 for day trips / one-way).
    pub fn nights(&self) -> u32 {
        match self.effective_return_date() {
            Some(ret) => (ret - self.depart_date).num_days().max(0) as u32,
            None => 0,
        }
    }

    /// True iff any optional constraint slot is present.
    pub fn is_constrained(&self) -> bool {
        self.budget_total.is_some()
            || self.hotel_preference.is_some()
            || self.transport_mode_preference.is_some()
            || self.poi_requirement.is_some()
            || self.arrival_deadline.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Unrated,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difficulty::Easy => write!(f, "easy"),
            Difficulty::Medium => write!(f, "medium"),
            Difficulty::Hard => write!(f, "hard"),
            Difficulty::Unrated => write!(f, "unrated"),
        }
    }
}

/// A travel request: intent slots plus the natural-language rendering the
/// policy consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub intents: IntentSet,
    pub constrained: bool,
    pub difficulty: Difficulty,
}

impl Query {
    /// Build a query from validated intents. The id is a stable digest of the
    /// intent set, so identical intents always get identical ids.
    pub fn from_intents(intents: IntentSet) -> Result<Self, IntentError> {
        intents.validate()?;
        let text = canonical_text(&intents);
        let id = query_id(&intents);
        let constrained = intents.is_constrained();
        Ok(Query {
            id,
            text,
            intents,
            constrained,
            difficulty: Difficulty::Unrated,
        })
    }
}

/// Stable query id: short hex digest over the canonical intent rendering.
pub fn query_id(intents: &IntentSet) -> String {
    use sha2::{Digest, Sha256};
    let canon = serde_json::to_string(intents).expect("intents serialize");
    let digest = Sha256::digest(canon.as_bytes());
    let mut hex = String::with_capacity(14);
    for b in digest.iter().take(6) {
        hex.push_str(&format!("{b:02x}"));
    }
    format!("q{hex}")
}

fn render_minutes(m: u16) -> String {
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn parse_minutes(s: &str) -> Option<u16> {
    let (h, m) = s.split_once(':')?;
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    if h < 24 && m < 60 {
        Some(h * 60 + m)
    } else {
        None
    }
}

/// Deterministic natural-language rendering of an intent set. Injective per
/// intent set: every slot contributes a clause that carries its value, and
/// [`parse_canonical_text`] inverts it.
pub fn canonical_text(intents: &IntentSet) -> String {
    let mut text = format!(
        "Please help schedule a trip from {} to {} departing on {}",
        intents.origin, intents.destination, intents.depart_date
    );
    if let Some(ret) = intents.return_date {
        text.push_str(&format!(" and returning on {ret}"));
    }
    text.push('.');
    if let Some(days) = intents.trip_length_days {
        text.push_str(&format!(" Stay there for {days} day's trip."));
    }
    if let Some(mode) = intents.transport_mode_preference {
        text.push_str(&format!(" Travel by {mode}."));
    }
    if let Some(deadline) = intents.arrival_deadline {
        text.push_str(&format!(
            " I need to arrive before {} on the first day.",
            render_minutes(deadline)
        ));
    }
    if let Some(budget) = intents.budget_total {
        text.push_str(&format!(
            " Keep the total cost within {}.{:02} CNY.",
            budget / 100,
            budget % 100
        ));
    }
    if let Some(pref) = &intents.hotel_preference {
        text.push_str(&format!(
            " I'd like to stay at a hotel matching \"{pref}\"."
        ));
    }
    if let Some(poi) = &intents.poi_requirement {
        text.push_str(&format!(" Make sure the plan visits {poi}."));
    }
    text
}

/// Invert [`canonical_text`]. Returns `None` for text that does not follow
/// the template; only template-generated queries are parsed.
pub fn parse_canonical_text(text: &str) -> Option<IntentSet> {
    let rest = text.strip_prefix("Please help schedule a trip from ")?;
    let (origin, rest) = rest.split_once(" to ")?;
    let (destination, rest) = rest.split_once(" departing on ")?;
    let (head, mut rest) = rest.split_once('.')?;
    let (depart_date, return_date) = match head.split_once(" and returning on ") {
        Some((d, r)) => (
            d.parse::<NaiveDate>().ok()?,
            Some(r.parse::<NaiveDate>().ok()?),
        ),
        None => (head.parse::<NaiveDate>().ok()?, None),
    };
    let mut set = IntentSet {
        origin: origin.to_string(),
        destination: destination.to_string(),
        depart_date,
        return_date,
        trip_length_days: None,
        arrival_deadline: None,
        budget_total: None,
        hotel_preference: None,
        transport_mode_preference: None,
        poi_requirement: None,
    };
    while !rest.trim().is_empty() {
        let clause = rest.trim_start();
        if let Some(tail) = clause.strip_prefix("Stay there for ") {
            let (days, tail) = tail.split_once(" day's trip.")?;
            set.trip_length_days = Some(days.parse().ok()?);
            rest = tail;
        } else if let Some(tail) = clause.strip_prefix("Travel by ") {
            let (mode, tail) = tail.split_once('.')?;
            set.transport_mode_preference = Some(match mode {
                "flight" => TransportMode::Flight,
                "train" => TransportMode::Train,
                _ => return None,
            });
            rest = tail;
        } else if let Some(tail) = clause.strip_prefix("I need to arrive before ") {
            let (time, tail) = tail.split_once(" on the first day.")?;
            set.arrival_deadline = Some(parse_minutes(time)?);
            rest = tail;
        } else if let Some(tail) = clause.strip_prefix("Keep the total cost within ") {
            let (amount, tail) = tail.split_once(" CNY.")?;
            let (yuan, cents) = amount.split_once('.')?;
            set.budget_total = Some(yuan.parse::<i64>().ok()? * 100 + cents.parse::<i64>().ok()?);
            rest = tail;
        } else if let Some(tail) = clause.strip_prefix("I'd like to stay at a hotel matching \"") {
            let (pref, tail) = tail.split_once("\".")?;
            set.hotel_preference = Some(pref.to_string());
            rest = tail;
        } else {
            let tail = clause.strip_prefix("Make sure the plan visits ")?;
            let (poi, tail) = tail.split_once('.')?;
            set.poi_requirement = Some(poi.to_string());
            rest = tail;
        }
    }
    set.validate().ok()?;
    Some(set)
}

/// One transport leg of an itinerary, citing a sandbox record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub record_id: String,
    pub mode: TransportMode,
    pub origin: String,
    pub destination: String,
    pub date: NaiveDate,
    pub depart_time: u16,
    pub arrive_time: u16,
    #[serde(default)]
    pub arrive_next_day: bool,
    pub price_cents: i64,
}

impl Leg {
    /// Arrival expressed as minutes since midnight of the departure date.
    pub fn arrival_abs_minutes(&self) -> u32 {
        self.arrive_time as u32 + if self.arrive_next_day { 1440 } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelStay {
    pub record_id: String,
    pub name: String,
    pub city: String,
    pub checkin: NaiveDate,
    pub checkout: NaiveDate,
    pub total_price_cents: i64,
}

impl HotelStay {
    pub fn nights(&self) -> i64 {
        (self.checkout - self.checkin).num_days()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiVisit {
    pub poi_id: String,
    pub name: String,
    /// Planned arrival at the POI, minutes-of-day.
    pub time: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    pub date: NaiveDate,
    pub visits: Vec<PoiVisit>,
}

/// Structured final plan: transport legs, hotel stay, and daily POI schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Itinerary {
    #[serde(default)]
    pub outbound_legs: Vec<Leg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hotel_stay: Option<HotelStay>,
    #[serde(default)]
    pub return_legs: Vec<Leg>,
    #[serde(default)]
    pub daily_plan: Vec<DayPlan>,
    #[serde(default)]
    pub total_cost_cents: i64,
}

/// Recompute the itinerary cost from its components.
pub fn itinerary_cost(itinerary: &Itinerary) -> i64 {
    let legs: i64 = itinerary
        .outbound_legs
        .iter()
        .chain(&itinerary.return_legs)
        .map(|l| l.price_cents)
        .sum();
    legs + itinerary
        .hotel_stay
        .as_ref()
        .map_or(0, |h| h.total_price_cents)
}

/// True when the stored total disagrees with the recomputed sum.
pub fn cost_mismatch(itinerary: &Itinerary) -> bool {
    itinerary_cost(itinerary) != itinerary.total_cost_cents
}
