//! Versioned JSON-lines world files: one header line, then one line per
//! entity. The world digest is the SHA-256 of the serialized bytes.

use super::{
    City, HotelRecord, PoiRecord, TransportRecord, WebDoc, WorldState, WORLD_FORMAT_VERSION,
};
use crate::domain::TransportMode;
use crate::sandbox::WorldConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum WorldFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad world record at line {line}: {source}")]
    Decode {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing header line")]
    MissingHeader,
    #[error("unsupported world format version {0}")]
    Version(u32),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum WorldLine {
    Header {
        version: u32,
        seed: u64,
        epoch: u32,
        config: WorldConfig,
    },
    City(City),
    Poi(PoiRecord),
    Hotel(HotelRecord),
    Transport(TransportRecord),
    WebDoc(WebDoc),
}

fn serialize_lines(world: &WorldState) -> Vec<String> {
    let mut lines = Vec::new();
    let mut push = |line: &WorldLine| {
        lines.push(serde_json::to_string(line).expect("world line serializes"));
    };
    push(&WorldLine::Header {
        version: world.version,
        seed: world.seed,
        epoch: world.epoch,
        config: world.config.clone(),
    });
    for city in &world.cities {
        push(&WorldLine::City(city.clone()));
    }
    for pois in world.pois.values() {
        for poi in pois {
            push(&WorldLine::Poi(poi.clone()));
        }
    }
    for hotels in world.hotels.values() {
        for hotel in hotels {
            push(&WorldLine::Hotel(hotel.clone()));
        }
    }
    for records in world.flights.values().chain(world.trains.values()) {
        for record in records {
            push(&WorldLine::Transport(record.clone()));
        }
    }
    for doc in &world.web_docs {
        push(&WorldLine::WebDoc(doc.clone()));
    }
    lines
}

/// SHA-256 hex digest over the canonical serialized form.
pub fn world_digest(world: &WorldState) -> String {
    let mut hasher = Sha256::new();
    for line in serialize_lines(world) {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write the world file and return its digest.
pub fn save_world(world: &WorldState, path: &Path) -> Result<String, WorldFileError> {
    let io_err = |source| WorldFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    let mut hasher = Sha256::new();
    for line in serialize_lines(world) {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        file.write_all(line.as_bytes()).map_err(io_err)?;
        file.write_all(b"\n").map_err(io_err)?;
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn load_world(path: &Path) -> Result<WorldState, WorldFileError> {
    let io_err = |source| WorldFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);
    let mut world: Option<WorldState> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WorldLine =
            serde_json::from_str(&line).map_err(|source| WorldFileError::Decode {
                line: idx + 1,
                source,
            })?;
        match record {
            WorldLine::Header {
                version,
                seed,
                epoch,
                config,
            } => {
                if version != WORLD_FORMAT_VERSION {
                    return Err(WorldFileError::Version(version));
                }
                world = Some(WorldState {
                    version,
                    seed,
                    config,
                    epoch,
                    cities: Vec::new(),
                    flights: Default::default(),
                    trains: Default::default(),
                    hotels: Default::default(),
                    pois: Default::default(),
                    web_docs: Vec::new(),
                });
            }
            other => {
                let world = world.as_mut().ok_or(WorldFileError::MissingHeader)?;
                match other {
                    WorldLine::Header { .. } => unreachable!(),
                    WorldLine::City(city) => world.cities.push(city),
                    WorldLine::Poi(poi) => {
                        world.pois.entry(poi.city.clone()).or_default().push(poi)
                    }
                    WorldLine::Hotel(hotel) => world
                        .hotels
                        .entry(hotel.city.clone())
                        .or_default()
                        .push(hotel),
                    WorldLine::Transport(record) => {
                        let key = (
                            record.origin.clone(),
                            record.destination.clone(),
                            record.date,
                        );
                        let map = match record.mode {
                            TransportMode::Flight => &mut world.flights,
                            TransportMode::Train => &mut world.trains,
                        };
                        map.entry(key).or_default().push(record);
                    }
                    WorldLine::WebDoc(doc) => world.web_docs.push(doc),
                }
            }
        }
    }
    world.ok_or(WorldFileError::MissingHeader)
}
