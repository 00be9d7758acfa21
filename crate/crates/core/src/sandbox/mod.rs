//! Deterministic synthetic travel world behind the six planning tools.
//!
//! The sandbox serves flight/train/hotel/POI/route/web lookups from a seeded
//! [`WorldState`], caches every response on first miss keyed by
//! `(tool, canonical args, epoch)`, and refreshes prices and availability
//! when the day epoch advances while keeping record ids stable. Malformed
//! calls come back as in-band error responses so an episode loop never has
//! to handle a tool exception.

mod file;
mod gen;

pub use file::{load_world, save_world, world_digest, WorldFileError};
pub use gen::{generate_world, haversine_m, tokenize, ConfigError, WorldConfig};

use crate::domain::TransportMode;
use crate::rng::stream;
use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub id: String,
    pub mode: TransportMode,
    pub origin: String,
    pub destination: String,
    pub date: NaiveDate,
    /// Minutes of day, 0..1440.
    pub depart_time: u16,
    pub arrive_time: u16,
    /// Arrival crosses midnight.
    #[serde(default)]
    pub arrive_next_day: bool,
    pub price_cents: i64,
    pub seats_available: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelRecord {
    pub id: String,
    pub name: String,
    pub city: String,
    pub nightly_price_cents: i64,
    pub rooms_available: u32,
    pub lat: f64,
    pub lon: f64,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub id: String,
    pub name: String,
    pub city: String,
    pub address: String,
    pub lat: f64,
    pub lon: f64,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebDoc {
    pub id: String,
    pub title: String,
    pub body: String,
    pub terms: Vec<String>,
}

pub type ScheduleKey = (String, String, NaiveDate);

/// The full synthetic world. Regenerating with identical `(seed, config)`
/// yields byte-identical state; see [`generate_world`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub version: u32,
    pub seed: u64,
    pub config: WorldConfig,
    /// Day index since world genesis.
    pub epoch: u32,
    pub cities: Vec<City>,
    pub flights: BTreeMap<ScheduleKey, Vec<TransportRecord>>,
    pub trains: BTreeMap<ScheduleKey, Vec<TransportRecord>>,
    pub hotels: BTreeMap<String, Vec<HotelRecord>>,
    pub pois: BTreeMap<String, Vec<PoiRecord>>,
    pub web_docs: Vec<WebDoc>,
}

impl WorldState {
    pub fn resolve_city(&self, name: &str) -> Option<&City> {
        let needle = name.trim();
        self.cities
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(needle))
    }

    pub fn in_horizon(&self, date: NaiveDate) -> bool {
        let end = self.config.start_date + chrono::Days::new(self.config.days as u64);
        date >= self.config.start_date && date < end
    }

    /// Advance the day epoch: prices and availability are regenerated from
    /// `(seed, epoch)`, ids and schedules stay put.
    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
        gen::refresh_mutable(self);
    }
}

// ---------------------------------------------------------------------------
// Tool calls
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    FlightSearch,
    TrainSearch,
    RoutePlanning,
    HotelSearch,
    PoiSearch,
    WebSearch,
}

impl ToolName {
    pub const ALL: [ToolName; 6] = [
        ToolName::FlightSearch,
        ToolName::TrainSearch,
        ToolName::RoutePlanning,
        ToolName::HotelSearch,
        ToolName::PoiSearch,
        ToolName::WebSearch,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToolName::FlightSearch => "flight_search",
            ToolName::TrainSearch => "train_search",
            ToolName::RoutePlanning => "route_planning",
            ToolName::HotelSearch => "hotel_search",
            ToolName::PoiSearch => "poi_search",
            ToolName::WebSearch => "web_search",
        }
    }

    pub fn parse(s: &str) -> Option<ToolName> {
        Self::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    /// Canonical keyword parameter names, in canonical order. Optional
    /// trailing parameters are marked by [`ToolName::required_arity`].
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ToolName::FlightSearch | ToolName::TrainSearch => {
                &["depart_city", "arrival_city", "depart_date"]
            }
            ToolName::RoutePlanning => &["origin", "destination", "city_name"],
            ToolName::HotelSearch => &["city_name", "checkin_date", "checkout_date", "hotel_name"],
            ToolName::PoiSearch => &["query", "city_name"],
            ToolName::WebSearch => &["query"],
        }
    }

    pub fn required_arity(&self) -> usize {
        match self {
            ToolName::HotelSearch => 3,
            other => other.param_names().len(),
        }
    }
}

/// A parsed tool call: canonical keyword arguments plus any extra keyword
/// arguments preserved verbatim (sorted by key).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    /// `(canonical key, raw value)` in canonical parameter order.
    pub args: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<(String, String)>,
}

impl ToolCall {
    pub fn new(name: ToolName, values: &[&str]) -> ToolCall {
        let args = name
            .param_names()
            .iter()
            .zip(values)
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        ToolCall {
            name,
            args,
            extras: Vec::new(),
        }
    }

    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Canonical cache key body: keyword-normalized, trimmed, case-folded.
    pub fn canonical_args(&self) -> String {
        let mut parts: Vec<String> = self
            .args
            .iter()
            .chain(self.extras.iter())
            .map(|(k, v)| format!("{}={}", k, v.trim().to_lowercase()))
            .collect();
        // Canonical order is already fixed for named params; extras follow
        // sorted by key, so equivalent calls share one key.
        let split = self.args.len();
        parts[split..].sort();
        parts.join(";")
    }

    /// Keyword-style rendering used inside `<tool_call>` tags.
    pub fn render(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .chain(self.extras.iter())
            .map(|(k, v)| format!("{k}=\"{v}\""))
            .collect();
        format!("{}({})", self.name.as_str(), args.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Tool responses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotelOption {
    pub id: String,
    pub name: String,
    pub city: String,
    pub checkin: NaiveDate,
    pub checkout: NaiveDate,
    pub nights: u32,
    pub nightly_price_cents: i64,
    pub total_price_cents: i64,
    pub rooms_available: u32,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteInfo {
    pub origin: String,
    pub destination: String,
    pub city: String,
    pub distance_m: u64,
    pub duration_min: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebHit {
    pub id: String,
    pub title: String,
    pub snippet: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolData {
    Transport { options: Vec<TransportRecord> },
    Route { route: RouteInfo },
    Hotels { options: Vec<HotelOption> },
    Pois { matches: Vec<PoiRecord> },
    Web { results: Vec<WebHit> },
}

/// Every tool outcome, including failures, is a well-formed response; the
/// episode loop never sees an exception from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub tool: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<ToolData>,
}

impl ToolResponse {
    pub fn ok(tool: ToolName, data: ToolData) -> ToolResponse {
        ToolResponse {
            tool: tool.as_str().to_string(),
            ok: true,
            error: None,
            data: Some(data),
        }
    }

    pub fn error(tool: ToolName, message: impl Into<String>) -> ToolResponse {
        ToolResponse {
            tool: tool.as_str().to_string(),
            ok: false,
            error: Some(message.into()),
            data: None,
        }
    }

    /// Compact JSON body placed inside `<tool_response>` tags.
    pub fn to_body(&self) -> String {
        serde_json::to_string(self).expect("tool response serializes")
    }

    pub fn from_body(body: &str) -> Option<ToolResponse> {
        serde_json::from_str(body).ok()
    }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

pub type CacheKey = (String, String, u32);

/// On-demand response cache. A key is written at most once; later identical
/// calls return the stored bytes. Entries from earlier epochs stay
/// retrievable after the epoch advances.
#[derive(Debug, Default)]
pub struct CacheStore {
    entries: BTreeMap<CacheKey, String>,
    insertion_log: Vec<CacheKey>,
}

impl CacheStore {
    pub fn get(&self, key: &CacheKey) -> Option<&String> {
        self.entries.get(key)
    }

    /// First writer wins; identical later writes are no-ops.
    pub fn insert_if_absent(&mut self, key: CacheKey, value: String) -> bool {
        if self.entries.contains_key(&key) {
            return false;
        }
        self.insertion_log.push(key.clone());
        self.entries.insert(key, value);
        true
    }

    pub fn insertions(&self) -> usize {
        self.insertion_log.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Live-mode flakiness injection
// ---------------------------------------------------------------------------

/// Simulates the unstable real-API condition. Disabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveModeConfig {
    /// Probability of a transient-failure error response.
    pub failure_rate: f64,
    /// Probability of bypassing the cache and regenerating a drifted response.
    pub drift_rate: f64,
}

impl Default for LiveModeConfig {
    fn default() -> Self {
        LiveModeConfig {
            failure_rate: 0.0,
            drift_rate: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Sandbox
// ---------------------------------------------------------------------------

/// The world plus its response cache. Tool methods take `&self`; cache
/// insertion is serialized internally, so parallel rollouts can share one
/// sandbox read-only. Epoch advancement needs `&mut self`.
#[derive(Debug)]
pub struct Sandbox {
    world: WorldState,
    cache: Mutex<CacheStore>,
}

impl Sandbox {
    pub fn new(world: WorldState) -> Sandbox {
        Sandbox {
            world,
            cache: Mutex::new(CacheStore::default()),
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn epoch(&self) -> u32 {
        self.world.epoch
    }

    pub fn cache_insertions(&self) -> usize {
        self.cache.lock().unwrap().insertions()
    }

    /// Fetch the cached body for a call at an arbitrary epoch, if present.
    pub fn cached_body(&self, call: &ToolCall, epoch: u32) -> Option<String> {
        let key = (call.name.as_str().to_string(), call.canonical_args(), epoch);
        self.cache.lock().unwrap().get(&key).cloned()
    }

    pub fn advance_epoch(&mut self) {
        self.world.advance_epoch();
    }

    /// Execute a call at the current epoch, caching on first miss. Returns
    /// the response and its exact serialized body.
    pub fn call(&self, call: &ToolCall) -> (ToolResponse, String) {
        let key = (
            call.name.as_str().to_string(),
            call.canonical_args(),
            self.world.epoch,
        );
        {
            let cache = self.cache.lock().unwrap();
            if let Some(body) = cache.get(&key) {
                let response = ToolResponse::from_body(body)
                    .unwrap_or_else(|| ToolResponse::error(call.name, "corrupt cache entry"));
                return (response, body.clone());
            }
        }
        let response = self.compute(call);
        let body = response.to_body();
        let mut cache = self.cache.lock().unwrap();
        if let Some(existing) = cache.get(&key) {
            // Another rollout won the race; identical bytes by determinism.
            let body = existing.clone();
            let response = ToolResponse::from_body(&body)
                .unwrap_or_else(|| ToolResponse::error(call.name, "corrupt cache entry"));
            return (response, body);
        }
        cache.insert_if_absent(key, body.clone());
        (response, body)
    }

    /// Live-mode call: transient failures and cache-bypassing drift at the
    /// configured rates, driven by the caller's per-episode rng stream.
    pub fn call_live(
        &self,
        cfg: &LiveModeConfig,
        rng: &mut ChaCha8Rng,
        call: &ToolCall,
    ) -> (ToolResponse, String) {
        if rng.gen::<f64>() < cfg.failure_rate {
            let response = ToolResponse::error(call.name, "transient failure: service unavailable");
            let body = response.to_body();
            return (response, body);
        }
        if rng.gen::<f64>() < cfg.drift_rate {
            let response = self.compute_drifted(call, rng.gen::<u64>());
            let body = response.to_body();
            return (response, body);
        }
        self.call(call)
    }

    fn compute(&self, call: &ToolCall) -> ToolResponse {
        match call.name {
            ToolName::FlightSearch => self.transport_search(call, TransportMode::Flight),
            ToolName::TrainSearch => self.transport_search(call, TransportMode::Train),
            ToolName::RoutePlanning => self.route_planning(call),
            ToolName::HotelSearch => self.hotel_search(call),
            ToolName::PoiSearch => self.poi_search(call),
            ToolName::WebSearch => self.web_search(call),
        }
    }

    /// Recompute a response with perturbed mutable attributes, simulating a
    /// real API returning different numbers for the same query.
    fn compute_drifted(&self, call: &ToolCall, salt: u64) -> ToolResponse {
        let mut response = self.compute(call);
        let mut rng = stream(salt, &["drift"]);
        if let Some(data) = &mut response.data {
            match data {
                ToolData::Transport { options } => {
                    for option in options {
                        let factor = rng.gen_range(0.9..1.1);
                        option.price_cents =
                            ((option.price_cents as f64 * factor / 100.0).round() as i64 * 100)
                                .max(100);
                        option.seats_available = rng.gen_range(0..=self.world.config.max_seats);
                    }
                }
                ToolData::Hotels { options } => {
                    for option in options {
                        let factor = rng.gen_range(0.9..1.1);
                        option.nightly_price_cents =
                            ((option.nightly_price_cents as f64 * factor / 100.0).round() as i64
                                * 100)
                                .max(100);
                        option.total_price_cents =
                            option.nightly_price_cents * option.nights as i64;
                        option.rooms_available = rng.gen_range(0..=5);
                    }
                }
                _ => {}
            }
        }
        response
    }

    #[allow(clippy::result_large_err)] // the Err side *is* the tool response
    fn parse_date(&self, tool: ToolName, raw: &str) -> Result<NaiveDate, ToolResponse> {
        let date: NaiveDate = raw
            .trim()
            .parse()
            .map_err(|_| ToolResponse::error(tool, format!("invalid date: {raw}")))?;
        if !self.world.in_horizon(date) {
            return Err(ToolResponse::error(
                tool,
                format!("date {date} outside world horizon"),
            ));
        }
        Ok(date)
    }

    #[allow(clippy::result_large_err)]
    fn city_or_error(&self, tool: ToolName, raw: &str) -> Result<&City, ToolResponse> {
        self.world
            .resolve_city(raw)
            .ok_or_else(|| ToolResponse::error(tool, format!("unknown city: {}", raw.trim())))
    }

    fn transport_search(&self, call: &ToolCall, mode: TransportMode) -> ToolResponse {
        let tool = call.name;
        let (depart_raw, arrival_raw, date_raw) = (
            call.arg("depart_city").unwrap_or_default(),
            call.arg("arrival_city").unwrap_or_default(),
            call.arg("depart_date").unwrap_or_default(),
        );
        let depart = match self.city_or_error(tool, depart_raw) {
            Ok(c) => c,
            Err(e) => return e,
        };
        let arrival = match self.city_or_error(tool, arrival_raw) {
            Ok(c) => c,
            Err(e) => return e,
        };
        let date = match self.parse_date(tool, date_raw) {
            Ok(d) => d,
            Err(e) => return e,
        };
        let map = match mode {
            TransportMode::Flight => &self.world.flights,
            TransportMode::Train => &self.world.trains,
        };
        let options = map
            .get(&(depart.name.clone(), arrival.name.clone(), date))
            .cloned()
            .unwrap_or_default();
        ToolResponse::ok(tool, ToolData::Transport { options })
    }

    /// Resolve a place name within a city: exact POI/hotel name match first,
    /// then substring containment.
    fn resolve_place(&self, city: &str, name: &str) -> Option<(f64, f64)> {
        let needle = name.trim().to_lowercase();
        let pois = self.world.pois.get(city);
        let hotels = self.world.hotels.get(city);
        let exact = pois
            .into_iter()
            .flatten()
            .map(|p| (p.name.as_str(), p.lat, p.lon))
            .chain(
                hotels
                    .into_iter()
                    .flatten()
                    .map(|h| (h.name.as_str(), h.lat, h.lon)),
            )
            .find(|(n, _, _)| n.to_lowercase() == needle);
        if let Some((_, lat, lon)) = exact {
            return Some((lat, lon));
        }
        self.world
            .pois
            .get(city)
            .into_iter()
            .flatten()
            .map(|p| (p.name.as_str(), p.lat, p.lon))
            .chain(
                self.world
                    .hotels
                    .get(city)
                    .into_iter()
                    .flatten()
                    .map(|h| (h.name.as_str(), h.lat, h.lon)),
            )
            .find(|(n, _, _)| n.to_lowercase().contains(&needle) && !needle.is_empty())
            .map(|(_, lat, lon)| (lat, lon))
    }

    fn route_planning(&self, call: &ToolCall) -> ToolResponse {
        let tool = call.name;
        let (origin_raw, dest_raw, city_raw) = (
            call.arg("origin").unwrap_or_default(),
            call.arg("destination").unwrap_or_default(),
            call.arg("city_name").unwrap_or_default(),
        );
        let city = match self.city_or_error(tool, city_raw) {
            Ok(c) => c.name.clone(),
            Err(e) => return e,
        };
        let origin = match self.resolve_place(&city, origin_raw) {
            Some(p) => p,
            None => {
                return ToolResponse::error(
                    tool,
                    format!("cannot resolve origin \"{}\" in {city}", origin_raw.trim()),
                )
            }
        };
        let destination = match self.resolve_place(&city, dest_raw) {
            Some(p) => p,
            None => {
                return ToolResponse::error(
                    tool,
                    format!(
                        "cannot resolve destination \"{}\" in {city}",
                        dest_raw.trim()
                    ),
                )
            }
        };
        let crow_m = haversine_m(origin.0, origin.1, destination.0, destination.1);
        let distance_m = (crow_m * self.world.config.road_factor).round() as u64;
        let duration_min =
            (distance_m as f64 / 1000.0 / self.world.config.city_speed_kmh * 60.0).round() as u32;
        ToolResponse::ok(
            tool,
            ToolData::Route {
                route: RouteInfo {
                    origin: origin_raw.trim().to_string(),
                    destination: dest_raw.trim().to_string(),
                    city,
                    distance_m,
                    duration_min,
                },
            },
        )
    }

    fn hotel_search(&self, call: &ToolCall) -> ToolResponse {
        let tool = call.name;
        let city = match self.city_or_error(tool, call.arg("city_name").unwrap_or_default()) {
            Ok(c) => c.name.clone(),
            Err(e) => return e,
        };
        let checkin = match self.parse_date(tool, call.arg("checkin_date").unwrap_or_default()) {
            Ok(d) => d,
            Err(e) => return e,
        };
        let checkout = match self.parse_date(tool, call.arg("checkout_date").unwrap_or_default()) {
            Ok(d) => d,
            Err(e) => return e,
        };
        if checkin >= checkout {
            return ToolResponse::error(tool, "invalid date range: checkin must precede checkout");
        }
        let nights = (checkout - checkin).num_days() as u32;
        let name_filter = call.arg("hotel_name").map(|s| s.trim().to_lowercase());
        let mut options: Vec<HotelOption> = self
            .world
            .hotels
            .get(&city)
            .into_iter()
            .flatten()
            .filter(|h| h.rooms_available >= 1)
            .filter(|h| match &name_filter {
                Some(f) if !f.is_empty() => h.name.to_lowercase().contains(f),
                _ => true,
            })
            .map(|h| HotelOption {
                id: h.id.clone(),
                name: h.name.clone(),
                city: h.city.clone(),
                checkin,
                checkout,
                nights,
                nightly_price_cents: h.nightly_price_cents,
                total_price_cents: h.nightly_price_cents * nights as i64,
                rooms_available: h.rooms_available,
                tags: h.tags.clone(),
            })
            .collect();
        options.sort_by(|a, b| (a.nightly_price_cents, &a.id).cmp(&(b.nightly_price_cents, &b.id)));
        ToolResponse::ok(tool, ToolData::Hotels { options })
    }

    fn poi_search(&self, call: &ToolCall) -> ToolResponse {
        let tool = call.name;
        let city = match self.city_or_error(tool, call.arg("city_name").unwrap_or_default()) {
            Ok(c) => c.name.clone(),
            Err(e) => return e,
        };
        let needle = call.arg("query").unwrap_or_default().trim().to_lowercase();
        // Empty query matches all POIs in the city.
        let matches: Vec<PoiRecord> = self
            .world
            .pois
            .get(&city)
            .into_iter()
            .flatten()
            .filter(|p| needle.is_empty() || p.name.to_lowercase().contains(&needle))
            .cloned()
            .collect();
        ToolResponse::ok(tool, ToolData::Pois { matches })
    }

    fn web_search(&self, call: &ToolCall) -> ToolResponse {
        let tool = call.name;
        let query_terms = tokenize(call.arg("query").unwrap_or_default());
        let mut scored: Vec<(u32, &WebDoc)> = self
            .world
            .web_docs
            .iter()
            .map(|doc| {
                let score = query_terms
                    .iter()
                    .filter(|t| doc.terms.binary_search(t).is_ok())
                    .count() as u32;
                (score, doc)
            })
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| {
            (std::cmp::Reverse(a.0), &a.1.id).cmp(&(std::cmp::Reverse(b.0), &b.1.id))
        });
        let results: Vec<WebHit> = scored
            .into_iter()
            .take(self.world.config.web_results_k)
            .map(|(score, doc)| WebHit {
                id: doc.id.clone(),
                title: doc.title.clone(),
                snippet: doc.body.clone(),
                score,
            })
            .collect();
        ToolResponse::ok(tool, ToolData::Web { results })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world(seed: u64) -> WorldState {
        let config = WorldConfig {
            cities: 4,
            days: 20,
            ..WorldConfig::default()
        };
        generate_world(seed, &config).unwrap()
    }

    #[test]
    fn same_seed_same_digest() {
        let a = world_digest(&small_world(7));
        let b = world_digest(&small_world(7));
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_different_digest() {
        assert_ne!(world_digest(&small_world(7)), world_digest(&small_world(8)));
    }

    #[test]
    fn zero_cities_is_a_config_error() {
        let config = WorldConfig {
            cities: 0,
            ..WorldConfig::default()
        };
        assert!(generate_world(7, &config).is_err());
    }

    #[test]
    fn empty_horizon_is_a_config_error() {
        let config = WorldConfig {
            days: 0,
            ..WorldConfig::default()
        };
        assert!(generate_world(7, &config).is_err());
    }

    #[test]
    fn flight_search_lists_options_for_scheduled_pair() {
        let sandbox = Sandbox::new(small_world(7));
        // Beijing -> Shanghai exists in the default roster; find any scheduled
        // pair to keep the test independent of link sampling.
        let ((origin, dest, date), expected) = sandbox
            .world()
            .flights
            .iter()
            .next()
            .map(|(k, v)| (k.clone(), v.clone()))
            .unwrap();
        let call = ToolCall::new(ToolName::FlightSearch, &[&origin, &dest, &date.to_string()]);
        let (response, _) = sandbox.call(&call);
        assert!(response.ok);
        match response.data.unwrap() {
            ToolData::Transport { options } => assert_eq!(options, expected),
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn repeated_call_is_byte_identical_with_one_insertion() {
        let sandbox = Sandbox::new(small_world(7));
        let date = sandbox.world().config.start_date.to_string();
        let call = ToolCall::new(ToolName::FlightSearch, &["Beijing", "Shanghai", &date]);
        let (_, body1) = sandbox.call(&call);
        let (_, body2) = sandbox.call(&call);
        let (_, body3) = sandbox.call(&call);
        assert_eq!(body1, body2);
        assert_eq!(body2, body3);
        assert_eq!(sandbox.cache_insertions(), 1);
    }

    #[test]
    fn unknown_city_is_in_band_error() {
        let sandbox = Sandbox::new(small_world(7));
        let call = ToolCall::new(
            ToolName::FlightSearch,
            &["Beijing", "Atlantis", "2025-07-02"],
        );
        let (response, _) = sandbox.call(&call);
        assert!(!response.ok);
        assert!(response.error.unwrap().contains("unknown city"));
    }

    #[test]
    fn unscheduled_pair_is_empty_not_error() {
        let world = small_world(7);
        // Find an ordered pair with no flight link.
        let date = world.config.start_date;
        let pair = world
            .cities
            .iter()
            .flat_map(|a| world.cities.iter().map(move |b| (a, b)))
            .find(|(a, b)| {
                a.name != b.name
                    && !world
                        .flights
                        .contains_key(&(a.name.clone(), b.name.clone(), date))
            });
        let Some((a, b)) = pair else {
            return; // fully linked at this seed; covered by other seeds
        };
        let sandbox = Sandbox::new(world.clone());
        let call = ToolCall::new(
            ToolName::FlightSearch,
            &[&a.name, &b.name, &date.to_string()],
        );
        let (response, _) = sandbox.call(&call);
        assert!(response.ok);
        match response.data.unwrap() {
            ToolData::Transport { options } => assert!(options.is_empty()),
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn route_identity_endpoints_zero_distance() {
        let sandbox = Sandbox::new(small_world(7));
        let call = ToolCall::new(
            ToolName::RoutePlanning,
            &["The Great Wall", "The Great Wall", "Beijing"],
        );
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Route { route } => {
                assert_eq!(route.distance_m, 0);
                assert_eq!(route.duration_min, 0);
            }
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn route_duration_matches_hand_formula() {
        let world = small_world(7);
        let beijing = world.pois.get("Beijing").unwrap();
        let (a, b) = (beijing[0].clone(), beijing[1].clone());
        let crow = haversine_m(a.lat, a.lon, b.lat, b.lon);
        let expect_dist = (crow * world.config.road_factor).round() as u64;
        let expect_dur =
            (expect_dist as f64 / 1000.0 / world.config.city_speed_kmh * 60.0).round() as u32;
        let sandbox = Sandbox::new(world);
        let call = ToolCall::new(ToolName::RoutePlanning, &[&a.name, &b.name, "Beijing"]);
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Route { route } => {
                assert_eq!(route.distance_m, expect_dist);
                assert_eq!(route.duration_min, expect_dur);
            }
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn route_unresolvable_names_failed_endpoint() {
        let sandbox = Sandbox::new(small_world(7));
        let call = ToolCall::new(
            ToolName::RoutePlanning,
            &["Nowhere Plaza", "The Great Wall", "Beijing"],
        );
        let (response, _) = sandbox.call(&call);
        assert!(!response.ok);
        assert!(response.error.unwrap().contains("Nowhere Plaza"));
    }

    #[test]
    fn hotel_total_is_nightly_times_nights() {
        let world = small_world(7);
        let start = world.config.start_date;
        let sandbox = Sandbox::new(world);
        let call = ToolCall::new(
            ToolName::HotelSearch,
            &[
                "Beijing",
                &start.to_string(),
                &(start + chrono::Days::new(3)).to_string(),
                "Atour",
            ],
        );
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Hotels { options } => {
                assert!(
                    !options.is_empty(),
                    "default world always has an Atour in Beijing"
                );
                for o in options {
                    assert!(o.name.contains("Atour"));
                    assert_eq!(o.nights, 3);
                    assert_eq!(o.total_price_cents, o.nightly_price_cents * 3);
                }
            }
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn inverted_hotel_dates_rejected() {
        let world = small_world(7);
        let start = world.config.start_date;
        let sandbox = Sandbox::new(world);
        let call = ToolCall::new(
            ToolName::HotelSearch,
            &[
                "Beijing",
                &(start + chrono::Days::new(3)).to_string(),
                &start.to_string(),
            ],
        );
        let (response, _) = sandbox.call(&call);
        assert!(!response.ok);
        assert!(response.error.unwrap().contains("invalid date range"));
    }

    #[test]
    fn unnamed_hotel_query_is_superset_of_named() {
        let world = small_world(7);
        let start = world.config.start_date;
        let sandbox = Sandbox::new(world);
        let dates = [
            start.to_string(),
            (start + chrono::Days::new(2)).to_string(),
        ];
        let named = ToolCall::new(
            ToolName::HotelSearch,
            &["Beijing", &dates[0], &dates[1], "Atour"],
        );
        let all = ToolCall::new(ToolName::HotelSearch, &["Beijing", &dates[0], &dates[1]]);
        let ids = |r: ToolResponse| match r.data.unwrap() {
            ToolData::Hotels { options } => options.into_iter().map(|o| o.id).collect::<Vec<_>>(),
            other => panic!("wrong payload: {other:?}"),
        };
        let named_ids = ids(sandbox.call(&named).0);
        let all_ids = ids(sandbox.call(&all).0);
        assert!(named_ids.iter().all(|id| all_ids.contains(id)));
    }

    #[test]
    fn poi_empty_query_matches_all() {
        let world = small_world(7);
        let n_pois = world.pois.get("Beijing").unwrap().len();
        let sandbox = Sandbox::new(world);
        let call = ToolCall::new(ToolName::PoiSearch, &["", "Beijing"]);
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Pois { matches } => assert_eq!(matches.len(), n_pois),
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn poi_search_finds_great_wall() {
        let sandbox = Sandbox::new(small_world(7));
        let call = ToolCall::new(ToolName::PoiSearch, &["The Great Wall", "Beijing"]);
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Pois { matches } => {
                assert_eq!(matches.len(), 1);
                assert!(!matches[0].address.is_empty());
            }
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn poi_no_match_is_empty() {
        let sandbox = Sandbox::new(small_world(7));
        let call = ToolCall::new(ToolName::PoiSearch, &["zzzzqqq", "Beijing"]);
        let (response, _) = sandbox.call(&call);
        match response.data.unwrap() {
            ToolData::Pois { matches } => assert!(matches.is_empty()),
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn web_search_finds_city_docs_and_rejects_nonsense() {
        let sandbox = Sandbox::new(small_world(7));
        let (response, _) = sandbox.call(&ToolCall::new(
            ToolName::WebSearch,
            &["Introduction to Beijing"],
        ));
        match response.data.unwrap() {
            ToolData::Web { results } => {
                assert!(!results.is_empty());
                assert!(results[0].title.contains("Beijing"));
            }
            other => panic!("wrong payload: {other:?}"),
        }
        let (response, _) =
            sandbox.call(&ToolCall::new(ToolName::WebSearch, &["qwggzhxy nonsense"]));
        match response.data.unwrap() {
            ToolData::Web { results } => assert!(results.is_empty()),
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn epoch_advance_keeps_ids_and_old_cache() {
        let mut world = small_world(7);
        let date = world.config.start_date;
        let ids_before: Vec<String> = world
            .flights
            .values()
            .flatten()
            .map(|r| r.id.clone())
            .collect();
        let mut sandbox = Sandbox::new(world.clone());
        let call = ToolCall::new(
            ToolName::FlightSearch,
            &["Beijing", "Shanghai", &date.to_string()],
        );
        let (_, epoch0_body) = sandbox.call(&call);
        sandbox.advance_epoch();
        assert_eq!(sandbox.epoch(), 1);
        let ids_after: Vec<String> = sandbox
            .world()
            .flights
            .values()
            .flatten()
            .map(|r| r.id.clone())
            .collect();
        assert_eq!(ids_before, ids_after);
        // Epoch-0 bytes still retrievable by their epoch key.
        assert_eq!(sandbox.cached_body(&call, 0).unwrap(), epoch0_body);
        // Fresh call at epoch 1 does not disturb the old entry.
        let (_, epoch1_body) = sandbox.call(&call);
        assert_eq!(sandbox.cached_body(&call, 0).unwrap(), epoch0_body);
        assert_eq!(sandbox.cached_body(&call, 1).unwrap(), epoch1_body);

        // Same-seed world advanced twice matches digests.
        world.advance_epoch();
        world.advance_epoch();
        let mut twin = small_world(7);
        twin.advance_epoch();
        twin.advance_epoch();
        assert_eq!(world_digest(&world), world_digest(&twin));
    }

    #[test]
    fn transport_times_are_ordered() {
        let world = small_world(11);
        for r in world
            .flights
            .values()
            .chain(world.trains.values())
            .flatten()
        {
            let arrive_abs = r.arrive_time as u32 + if r.arrive_next_day { 1440 } else { 0 };
            assert!(
                (r.depart_time as u32) < arrive_abs,
                "departure must precede arrival: {r:?}"
            );
            assert!(r.price_cents > 0);
            assert_ne!(r.origin, r.destination);
        }
    }

    #[test]
    fn live_mode_boundary_rates() {
        let sandbox = Sandbox::new(small_world(7));
        let date = sandbox.world().config.start_date.to_string();
        let call = ToolCall::new(ToolName::FlightSearch, &["Beijing", "Shanghai", &date]);

        let always_fail = LiveModeConfig {
            failure_rate: 1.0,
            drift_rate: 0.0,
        };
        let mut rng = crate::rng::stream(1, &["live"]);
        for _ in 0..50 {
            let (response, _) = sandbox.call_live(&always_fail, &mut rng, &call);
            assert!(!response.ok);
        }

        let disabled = LiveModeConfig::default();
        let mut rng = crate::rng::stream(2, &["live"]);
        let (live_response, live_body) = sandbox.call_live(&disabled, &mut rng, &call);
        let (plain_response, plain_body) = sandbox.call(&call);
        assert!(live_response.ok);
        assert_eq!(live_body, plain_body);
        assert_eq!(live_response, plain_response);
    }

    #[test]
    fn canonical_args_fold_case_and_whitespace() {
        let a = ToolCall::new(
            ToolName::FlightSearch,
            &["Beijing", "Shanghai", "2025-07-02"],
        );
        let b = ToolCall::new(
            ToolName::FlightSearch,
            &["  beijing ", "SHANGHAI", "2025-07-02"],
        );
        assert_eq!(a.canonical_args(), b.canonical_args());
    }
}
