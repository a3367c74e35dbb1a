//! Harness configuration: noise tables, reward shaping, generator
//! knobs and episode limits, loadable from one JSON file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pomdp::{NoiseProfile, PomdpError, RewardParams};
use crate::sim::GeneratorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Profile(#[from] PomdpError),
}

/// Everything the CLI and evaluation pipeline need in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub noise: NoiseProfile,
    pub reward: RewardParams,
    pub generator: GeneratorConfig,
    /// Lookahead depth; `None` plans with twice the tracked object
    /// count.
    pub horizon: Option<u32>,
    /// Maximum grasp attempts per object before the episode fails.
    pub retry_cap: u32,
    /// Scans integrated into the belief before the first decision.
    pub initial_scans: u32,
    /// Simulated minutes charged per grasp in the reports.
    pub grasp_time_minutes: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let generator = GeneratorConfig::default();
        HarnessConfig {
            noise: default_noise_profile(&generator),
            reward: RewardParams::default(),
            generator,
            horizon: None,
            retry_cap: 3,
            initial_scans: 3,
            grasp_time_minutes: 0.9,
        }
    }
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: HarnessConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        config.noise.validate()?;
        config.reward.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Illustrative default noise tables over the generator's categories:
/// recall 0.9 across the board; grasp success 0.9 except the hard
/// cases (plates 0.3; knives, forks and spoons 0.7).
pub fn default_noise_profile(generator: &GeneratorConfig) -> NoiseProfile {
    let mut profile = NoiseProfile::uniform(
        generator.categories.iter().map(|c| &c.name),
        0.9,
        0.9,
    );
    for (name, p) in [("plate", 0.3), ("knife", 0.7), ("fork", 0.7), ("spoon", 0.7)] {
        let key = crate::scene::Category::new(name);
        if profile.grasp_success.contains_key(&key) {
            profile.grasp_success.insert(key, p);
        }
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_json() {
        let config = HarnessConfig::default();
        let text = config.to_json();
        let back = HarnessConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn partial_config_files_fill_in_defaults() {
        let config = HarnessConfig::from_json(r#"{"retry_cap": 5}"#).unwrap();
        assert_eq!(config.retry_cap, 5);
        assert_eq!(config.grasp_time_minutes, 0.9);
        assert!(!config.noise.recall.is_empty());
    }

    #[test]
    fn invalid_reward_params_are_rejected() {
        let err = HarnessConfig::from_json(r#"{"reward": {"discount": 1.5}}"#);
        assert!(err.is_err());
        let err = HarnessConfig::from_json(r#"{"reward": {"base_penalty": 1.0}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn default_profile_covers_every_generator_category() {
        let generator = GeneratorConfig::default();
        let profile = default_noise_profile(&generator);
        for spec in &generator.categories {
            assert!(profile.recall.contains_key(&spec.name));
            assert!(profile.grasp_success.contains_key(&spec.name));
        }
        assert_eq!(
            profile.grasp_success[&crate::scene::Category::new("plate")],
            0.3
        );
    }
}
