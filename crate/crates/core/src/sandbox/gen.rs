//! Seeded world generation and per-epoch refresh.
//!
//! Everything here is a pure function of `(seed, config, epoch)`. Static
//! structure (cities, schedules, record ids, POIs, doc topics) depends only
//! on `(seed, config)`; mutable attributes (prices, seats, rooms) are keyed
//! by `(seed, record id, epoch)` so a refresh never disturbs identifiers.

use super::{City, HotelRecord, PoiRecord, TransportRecord, WebDoc, WorldState};
use crate::domain::TransportMode;
use crate::rng::stream;
use chrono::{Days, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Built-in city roster: name, latitude, longitude, landmark POIs.
const ROSTER: &[(&str, f64, f64, &[&str])] = &[
    (
        "Beijing",
        39.9042,
        116.4074,
        &[
            "The Great Wall",
            "National Palace Museum",
            "Temple of Heaven",
        ],
    ),
    ("Shanghai", 31.2304, 121.4737, &["The Bund", "Yu Garden"]),
    (
        "Wuhan",
        30.5928,
        114.3055,
        &[
            "Yellow Crane Tower",
            "Wuhan Conference Center",
            "Hankou Riverside",
        ],
    ),
    (
        "Suzhou",
        31.2989,
        120.5853,
        &["Humble Administrator's Garden", "Tiger Hill"],
    ),
    ("Guangzhou", 23.1291, 113.2644, &["Canton Tower"]),
    (
        "Chengdu",
        30.5728,
        104.0668,
        &["Panda Research Base", "Jinli Street"],
    ),
    ("Hangzhou", 30.2741, 120.1551, &["West Lake"]),
    (
        "Xi'an",
        34.3416,
        108.9398,
        &["Terracotta Army", "City Wall"],
    ),
    ("Nanjing", 32.0603, 118.7969, &["Confucius Temple"]),
    ("Chongqing", 29.5630, 106.5516, &["Hongya Cave"]),
    ("Tianjin", 39.3434, 117.3616, &["Tianjin Eye"]),
    ("Changsha", 28.2282, 112.9388, &["Orange Isle"]),
    ("Qingdao", 36.0671, 120.3826, &["Zhan Bridge"]),
    ("Kunming", 24.8801, 102.8329, &["Stone Forest"]),
    ("Dalian", 38.9140, 121.6147, &["Xinghai Square"]),
    ("Xiamen", 24.4798, 118.0894, &["Gulangyu Island"]),
    ("Zhengzhou", 34.7466, 113.6254, &["Shaolin Temple"]),
    ("Shenyang", 41.8057, 123.4315, &["Mukden Palace"]),
    ("Harbin", 45.8038, 126.5349, &["Ice and Snow World"]),
    ("Shenzhen", 22.5431, 114.0579, &["Window of the World"]),
];

const GENERIC_POIS: &[(&str, &str)] = &[
    ("{} Museum", "museum"),
    ("{} Old Town", "district"),
    ("{} People's Park", "park"),
    ("{} Grand Theater", "venue"),
    ("{} Railway Station", "station"),
    ("{} International Airport", "airport"),
];

const HOTEL_BRANDS: &[&str] = &[
    "Atour",
    "Hanting",
    "JI Hotel",
    "Orange",
    "Mercure",
    "Holiday Inn",
    "7 Days Inn",
    "Home Inn",
];

const HOTEL_DISTRICTS: &[&str] = &[
    "Downtown",
    "Riverside",
    "Old Town",
    "Railway Station",
    "High-Tech Zone",
    "Airport",
];

const HOTEL_AMENITIES: &[&str] = &["breakfast", "gym", "business", "family", "parking"];

const FLIGHT_CARRIERS: &[&str] = &["CA", "MU", "CZ", "HU", "3U", "ZH", "FM", "HO"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("city count must be between 2 and {max}, got {got}")]
    CityCount { got: usize, max: usize },
    #[error("date horizon must cover at least one day")]
    EmptyHorizon,
    #[error("invalid {what} range: low must be positive and below high")]
    BadRange { what: &'static str },
    #[error("probability {what} must lie in [0, 1]")]
    BadProbability { what: &'static str },
}

/// Generation parameters. Defaults give a small world that is still rich
/// enough for nontrivial candidate selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub cities: usize,
    pub days: u32,
    pub start_date: NaiveDate,
    pub flight_link_prob: f64,
    pub train_link_prob: f64,
    pub min_options: u32,
    pub max_options: u32,
    pub flight_price_cents: (i64, i64),
    pub train_price_cents: (i64, i64),
    pub hotel_price_cents: (i64, i64),
    pub min_hotels: u32,
    pub max_hotels: u32,
    pub max_seats: u32,
    pub sold_out_rate: f64,
    /// Great-circle to road-distance multiplier for route planning.
    pub road_factor: f64,
    pub city_speed_kmh: f64,
    pub flight_speed_kmh: f64,
    pub flight_overhead_min: u32,
    pub train_speed_kmh: f64,
    pub train_overhead_min: u32,
    pub web_results_k: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            cities: 6,
            days: 30,
            start_date: NaiveDate::from_ymd_opt(2025, 6, 20).unwrap(),
            flight_link_prob: 0.85,
            train_link_prob: 0.85,
            min_options: 2,
            max_options: 6,
            flight_price_cents: (30_000, 150_000),
            train_price_cents: (10_000, 60_000),
            hotel_price_cents: (15_000, 80_000),
            min_hotels: 3,
            max_hotels: 10,
            max_seats: 8,
            sold_out_rate: 0.08,
            road_factor: 1.3,
            city_speed_kmh: 40.0,
            flight_speed_kmh: 750.0,
            flight_overhead_min: 45,
            train_speed_kmh: 250.0,
            train_overhead_min: 15,
            web_results_k: 5,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cities < 2 || self.cities > ROSTER.len() {
            return Err(ConfigError::CityCount {
                got: self.cities,
                max: ROSTER.len(),
            });
        }
        if self.days == 0 {
            return Err(ConfigError::EmptyHorizon);
        }
        for (what, (lo, hi)) in [
            ("flight price", self.flight_price_cents),
            ("train price", self.train_price_cents),
            ("hotel price", self.hotel_price_cents),
        ] {
            if lo <= 0 || lo >= hi {
                return Err(ConfigError::BadRange { what });
            }
        }
        for (what, p) in [
            ("flight_link_prob", self.flight_link_prob),
            ("train_link_prob", self.train_link_prob),
            ("sold_out_rate", self.sold_out_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::BadProbability { what });
            }
        }
        if self.min_options == 0 || self.min_options > self.max_options {
            return Err(ConfigError::BadRange {
                what: "options per pair",
            });
        }
        if self.min_hotels == 0 || self.min_hotels > self.max_hotels {
            return Err(ConfigError::BadRange {
                what: "hotels per city",
            });
        }
        Ok(())
    }

    pub fn horizon(&self) -> Vec<NaiveDate> {
        (0..self.days)
            .map(|i| self.start_date + Days::new(i as u64))
            .collect()
    }
}

pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let r = 6_371_000.8_f64;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * a.sqrt().atan2((1.0 - a).sqrt())
}

/// Log-uniform price in `[lo, hi]`, rounded to whole yuan (100 cents).
fn log_uniform_price(rng: &mut impl Rng, lo: i64, hi: i64) -> i64 {
    let (llo, lhi) = ((lo as f64).ln(), (hi as f64).ln());
    let x = (llo + rng.gen::<f64>() * (lhi - llo)).exp();
    ((x / 100.0).round() as i64 * 100).clamp(lo, hi)
}

/// Count with a small chance of zero, for sold-out records.
fn availability(rng: &mut impl Rng, max: u32, sold_out_rate: f64) -> u32 {
    if rng.gen::<f64>() < sold_out_rate {
        0
    } else {
        rng.gen_range(1..=max.max(1))
    }
}

fn unique_id(
    candidate: String,
    used: &mut BTreeSet<String>,
    bump: impl Fn(u64) -> String,
) -> String {
    if used.insert(candidate.clone()) {
        return candidate;
    }
    let mut n = 0u64;
    loop {
        let alt = bump(n);
        if used.insert(alt.clone()) {
            return alt;
        }
        n += 1;
    }
}

fn city_slug(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_uppercase()
}

/// Build the world at epoch 0. Byte-identical for identical `(seed, config)`.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let mut world = WorldState {
        version: super::WORLD_FORMAT_VERSION,
        seed,
        config: config.clone(),
        epoch: 0,
        cities: Vec::new(),
        flights: Default::default(),
        trains: Default::default(),
        hotels: Default::default(),
        pois: Default::default(),
        web_docs: Vec::new(),
    };

    for (name, lat, lon, _) in ROSTER.iter().take(config.cities) {
        world.cities.push(City {
            name: name.to_string(),
            lat: *lat,
            lon: *lon,
        });
    }

    let mut used_ids: BTreeSet<String> = BTreeSet::new();

    // POIs: landmarks plus a generic civic set, jittered around the center.
    for (ci, (name, lat, lon, landmarks)) in ROSTER.iter().take(config.cities).enumerate() {
        let slug = city_slug(name);
        let mut pois = Vec::new();
        let mut rng = stream(seed, &["poi", name]);
        let push = |pois: &mut Vec<PoiRecord>,
                    rng: &mut rand_chacha::ChaCha8Rng,
                    poi_name: String,
                    category: &str,
                    used: &mut BTreeSet<String>| {
            let idx = pois.len();
            let id = unique_id(format!("POI-{slug}-{idx:02}"), used, |n| {
                format!("POI-{slug}-{idx:02}-{n}")
            });
            let dj: f64 = rng.gen_range(-0.25..0.25);
            let dj2: f64 = rng.gen_range(-0.25..0.25);
            let street_no = rng.gen_range(1..300);
            pois.push(PoiRecord {
                id,
                name: poi_name,
                city: name.to_string(),
                address: format!(
                    "{street_no} {} Rd, {}",
                    ["Renmin", "Zhongshan", "Jiefang", "Heping"][idx % 4],
                    name
                ),
                lat: lat + dj,
                lon: lon + dj2,
                category: category.to_string(),
            });
        };
        for lm in landmarks.iter() {
            push(
                &mut pois,
                &mut rng,
                lm.to_string(),
                "landmark",
                &mut used_ids,
            );
        }
        for (tpl, category) in GENERIC_POIS {
            push(
                &mut pois,
                &mut rng,
                tpl.replace("{}", name),
                category,
                &mut used_ids,
            );
        }
        world.pois.insert(world.cities[ci].name.clone(), pois);
    }

    // Hotels: brand and district cycles guarantee at least one Atour and one
    // riverside property per city.
    for city in &world.cities {
        let slug = city_slug(&city.name);
        let mut rng = stream(seed, &["hotel", &city.name]);
        let count = rng.gen_range(config.min_hotels..=config.max_hotels);
        let mut hotels = Vec::new();
        for i in 0..count {
            let brand = HOTEL_BRANDS[i as usize % HOTEL_BRANDS.len()];
            let district = HOTEL_DISTRICTS[i as usize % HOTEL_DISTRICTS.len()];
            let id = unique_id(format!("HTL-{slug}-{i:02}"), &mut used_ids, |n| {
                format!("HTL-{slug}-{i:02}-{n}")
            });
            let mut tags: Vec<String> = vec![district.to_lowercase().replace(' ', "-")];
            for amenity in HOTEL_AMENITIES {
                if rng.gen::<f64>() < 0.4 {
                    tags.push(amenity.to_string());
                }
            }
            tags.sort();
            tags.dedup();
            hotels.push(HotelRecord {
                id,
                name: format!("{brand} Hotel ({} {district})", city.name),
                city: city.name.clone(),
                nightly_price_cents: 0,
                rooms_available: 0,
                lat: city.lat + rng.gen_range(-0.2..0.2),
                lon: city.lon + rng.gen_range(-0.2..0.2),
                tags,
            });
        }
        world.hotels.insert(city.name.clone(), hotels);
    }

    // Transport schedules: directed links decided per (mode, pair), then
    // per-date option lists with distance-derived durations.
    let dates = config.horizon();
    for mode in [TransportMode::Flight, TransportMode::Train] {
        let (link_prob, speed, overhead) = match mode {
            TransportMode::Flight => (
                config.flight_link_prob,
                config.flight_speed_kmh,
                config.flight_overhead_min,
            ),
            TransportMode::Train => (
                config.train_link_prob,
                config.train_speed_kmh,
                config.train_overhead_min,
            ),
        };
        for a in &world.cities {
            for b in &world.cities {
                if a.name == b.name {
                    continue;
                }
                let mode_tag = mode.to_string();
                let mut link_rng = stream(seed, &["link", &mode_tag, &a.name, &b.name]);
                if link_rng.gen::<f64>() >= link_prob {
                    continue;
                }
                let dist_km = haversine_m(a.lat, a.lon, b.lat, b.lon) / 1000.0;
                let base_minutes = (dist_km / speed * 60.0).round() as u32 + overhead;
                for date in &dates {
                    let date_tag = date.to_string();
                    let mut rng = stream(seed, &["sched", &mode_tag, &a.name, &b.name, &date_tag]);
                    let count = rng.gen_range(config.min_options..=config.max_options);
                    let mut records = Vec::new();
                    for i in 0..count {
                        let slot = (i + 1) as i64 * 1080 / (count + 1) as i64;
                        let jitter: i64 = rng.gen_range(-90..=90);
                        let depart = (300 + slot + jitter).clamp(300, 1380) as u32;
                        let duration = base_minutes + rng.gen_range(0..=30);
                        let arrive_abs = depart + duration.max(10);
                        let number = rng.gen_range(1000..10_000u64);
                        let raw_id = match mode {
                            TransportMode::Flight => {
                                let carrier =
                                    FLIGHT_CARRIERS[rng.gen_range(0..FLIGHT_CARRIERS.len())];
                                format!("{carrier}{number}")
                            }
                            TransportMode::Train => {
                                let prefix = ["G", "D"][rng.gen_range(0..2usize)];
                                format!("{prefix}{number}")
                            }
                        };
                        let id =
                            unique_id(raw_id.clone(), &mut used_ids, |n| format!("{raw_id}-{n}"));
                        records.push(TransportRecord {
                            id,
                            mode,
                            origin: a.name.clone(),
                            destination: b.name.clone(),
                            date: *date,
                            depart_time: depart as u16,
                            arrive_time: (arrive_abs % 1440) as u16,
                            arrive_next_day: arrive_abs >= 1440,
                            price_cents: 0,
                            seats_available: 0,
                        });
                    }
                    records.sort_by(|x, y| (x.depart_time, &x.id).cmp(&(y.depart_time, &y.id)));
                    let map = match mode {
                        TransportMode::Flight => &mut world.flights,
                        TransportMode::Train => &mut world.trains,
                    };
                    map.insert((a.name.clone(), b.name.clone(), *date), records);
                }
            }
        }
    }

    // Web documents: per-city topical pages plus a few global guides.
    for city in &world.cities {
        let slug = city_slug(&city.name);
        let landmark_list = world.pois[&city.name]
            .iter()
            .filter(|p| p.category == "landmark")
            .map(|p| p.name.clone())
            .collect::<Vec<_>>()
            .join(", ");
        for (i, title) in [
            format!("Introduction to {}", city.name),
            format!("Top attractions in {}", city.name),
            format!("{} travel guide", city.name),
        ]
        .into_iter()
        .enumerate()
        {
            world.web_docs.push(WebDoc {
                id: format!("WEB-{slug}-{i:02}"),
                title: title.clone(),
                body: format!(
                    "{title}. {} is a popular travel destination. Highlights include {landmark_list}.",
                    city.name
                ),
                terms: tokenize(&format!("{title} {} {landmark_list}", city.name)),
            });
        }
    }
    for (i, title) in [
        "Travel planning tips for business trips",
        "High-speed rail booking guide",
    ]
    .iter()
    .enumerate()
    {
        world.web_docs.push(WebDoc {
            id: format!("WEB-GEN-{i:02}"),
            title: title.to_string(),
            body: format!("{title}. General advice on schedules, budgets, and bookings."),
            terms: tokenize(title),
        });
    }

    refresh_mutable(&mut world);
    Ok(world)
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut terms: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect();
    terms.sort();
    terms.dedup();
    terms
}

/// Recompute prices and availability for the world's current epoch.
pub fn refresh_mutable(world: &mut WorldState) {
    let seed = world.seed;
    let epoch = world.epoch.to_string();
    let cfg = world.config.clone();
    for records in world.flights.values_mut().chain(world.trains.values_mut()) {
        for r in records {
            let (lo, hi) = match r.mode {
                TransportMode::Flight => cfg.flight_price_cents,
                TransportMode::Train => cfg.train_price_cents,
            };
            let mut rng = stream(seed, &["fare", &r.id, &epoch]);
            r.price_cents = log_uniform_price(&mut rng, lo, hi);
            r.seats_available = availability(&mut rng, cfg.max_seats, cfg.sold_out_rate);
        }
    }
    for hotels in world.hotels.values_mut() {
        for h in hotels {
            let (lo, hi) = cfg.hotel_price_cents;
            let mut rng = stream(seed, &["rate", &h.id, &epoch]);
            h.nightly_price_cents = log_uniform_price(&mut rng, lo, hi);
            h.rooms_available = availability(&mut rng, 5, cfg.sold_out_rate);
        }
    }
}
