//! Flat declarative training config: one TOML document mapping trainer,
//! episode-limit, and cold-start fields, with `--set key=value` overrides.

use anyhow::{bail, Context, Result};
use deeptravel_core::policy::CloneConfig;
use deeptravel_core::protocol::EpisodeLimits;
use deeptravel_core::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFileConfig {
    pub seed: u64,
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub std_filter_threshold: f64,
    pub replay_period: u64,
    pub replay_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub ref_refresh: u64,
    pub ratio_against_ref: bool,
    pub buffer_capacity: Option<usize>,
    pub checkpoint_every: u64,
    pub max_turns: usize,
    pub max_total_segments: usize,
    pub clone_epochs: usize,
    pub clone_learning_rate: f64,
    pub clone_batch_size: usize,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        let trainer = TrainerConfig::default();
        let limits = EpisodeLimits::default();
        let clone = CloneConfig::default();
        TrainFileConfig {
            seed: trainer.seed,
            group_size: trainer.group_size,
            clip_epsilon: trainer.clip_epsilon,
            kl_beta: trainer.kl_beta,
            std_filter_threshold: trainer.std_filter_threshold,
            replay_period: trainer.replay_period,
            replay_fraction: trainer.replay_fraction,
            learning_rate: trainer.learning_rate,
            batch_size: trainer.batch_size,
            total_steps: trainer.total_steps,
            ref_refresh: trainer.ref_refresh,
            ratio_against_ref: trainer.ratio_against_ref,
            buffer_capacity: trainer.buffer_capacity,
            checkpoint_every: 50,
            max_turns: limits.max_turns,
            max_total_segments: limits.max_total_segments,
            clone_epochs: clone.epochs,
            clone_learning_rate: clone.learning_rate,
            clone_batch_size: clone.batch_size,
        }
    }
}

impl TrainFileConfig {
    /// Load the file (if given), apply `key=value` overrides, and honor the
    /// `DEEPTRAVEL_SEED` environment override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<TrainFileConfig> {
        let mut table: toml::Table = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                text.parse()
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for entry in overrides {
            let Some((key, raw)) = entry.split_once('=') else {
                bail!("override {entry:?} is not of the form key=value");
            };
            table.insert(key.trim().to_string(), parse_toml_value(raw.trim()));
        }
        if let Ok(seed) = std::env::var("DEEPTRAVEL_SEED") {
            let seed: u64 = seed
                .parse()
                .context("DEEPTRAVEL_SEED must be an unsigned integer")?;
            table.insert("seed".to_string(), toml::Value::Integer(seed as i64));
        }
        let config: TrainFileConfig =
            TrainFileConfig::deserialize(table).context("invalid training config")?;
        Ok(config)
    }

    pub fn trainer_config(&self, replay_enabled: bool) -> TrainerConfig {
        TrainerConfig {
            group_size: self.group_size,
            clip_epsilon: self.clip_epsilon,
            kl_beta: self.kl_beta,
            std_filter_threshold: self.std_filter_threshold,
            replay_period: self.replay_period,
            replay_enabled,
            replay_fraction: self.replay_fraction,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            ref_refresh: self.ref_refresh,
            ratio_against_ref: self.ratio_against_ref,
            buffer_capacity: self.buffer_capacity,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            limits: self.limits(),
        }
    }

    pub fn limits(&self) -> EpisodeLimits {
        EpisodeLimits {
            max_turns: self.max_turns,
            max_total_segments: self.max_total_segments,
        }
    }

    pub fn clone_config(&self) -> CloneConfig {
        CloneConfig {
            epochs: self.clone_epochs,
            learning_rate: self.clone_learning_rate,
            batch_size: self.clone_batch_size,
            seed: self.seed,
        }
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = TrainFileConfig::default();
        let text = toml::to_string(&config).unwrap();
        let parsed: TrainFileConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.total_steps, config.total_steps);
    }

    #[test]
    fn overrides_take_precedence() {
        let config = TrainFileConfig::load(
            None,
            &[
                "total_steps=42".to_string(),
                "learning_rate=0.25".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(config.total_steps, 42);
        assert_eq!(config.learning_rate, 0.25);
    }

    #[test]
    fn bad_override_is_an_error() {
        assert!(TrainFileConfig::load(None, &["nonsense".to_string()]).is_err());
        assert!(TrainFileConfig::load(None, &["unknown_key=1".to_string()]).is_err());
    }
}
