use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skg_core::{ChannelConfig, ScatteringConfig, SchemeKind, TsneConfig};

use crate::error::{Stage, StageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label written next to the results, e.g. `static` or `mobile`.
    pub name: String,
    /// Root of every random stream in the run.
    pub seed: u64,
    pub n_seeds: usize,
    pub timestamps: usize,
    pub subcarriers: Vec<usize>,
    /// Scattering orders kept as embedding features.
    pub feature_orders: Vec<u8>,
    pub c_max: usize,
    pub key_length_l: usize,
    pub schemes: Vec<SchemeKind>,
    /// Bit-mismatch thresholds in percent.
    pub thresholds: Vec<f64>,
    pub output_dir: PathBuf,
    pub channel: ChannelConfig,
    pub scattering: ScatteringConfig,
    pub tsne: TsneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "static".into(),
            seed: 0,
            n_seeds: 5,
            timestamps: 2,
            subcarriers: vec![0, 1],
            feature_orders: vec![0, 1],
            c_max: 2,
            key_length_l: 128,
            schemes: SchemeKind::ALL.to_vec(),
            thresholds: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            output_dir: PathBuf::from("out"),
            channel: ChannelConfig::default(),
            scattering: ScatteringConfig::default(),
            tsne: TsneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The mobile counterpart of the default configuration.
    pub fn mobile() -> Self {
        Self {
            name: "mobile".into(),
            channel: ChannelConfig { doppler_norm: 3.0e-3, ..ChannelConfig::default() },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path).map_err(|e| StageError::at(Stage::Config, path, e))?;
        Self::from_toml(&text).map_err(|e| StageError::at(Stage::Config, path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.channel.validate().map_err(|e| e.to_string())?;
        self.scattering.validate().map_err(|e| e.to_string())?;
        self.tsne.validate().map_err(|e| e.to_string())?;
        if self.n_seeds == 0 {
            return Err("n_seeds must be at least 1".into());
        }
        if self.timestamps == 0 {
            return Err("timestamps must be at least 1".into());
        }
        if self.subcarriers.is_empty() {
            return Err("subcarriers must list at least one index".into());
        }
        if let Some(&k) = self.subcarriers.iter().find(|&&k| k >= self.channel.n_subcarriers) {
            return Err(format!("subcarrier {k} outside the {} simulated subcarriers", self.channel.n_subcarriers));
        }
        if self.feature_orders.is_empty() || self.feature_orders.iter().any(|&o| o > self.scattering.max_order) {
            return Err("feature_orders must be a non-empty subset of the computed orders".into());
        }
        if self.c_max == 0 {
            return Err("c_max must be at least 1".into());
        }
        if self.key_length_l == 0 {
            return Err("key_length_l must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return Err("schemes must list at least one encoding".into());
        }
        if self.thresholds.windows(2).any(|w| !(w[0] <= w[1])) || self.thresholds.iter().any(|t| !(0.0..=100.0).contains(t)) {
            return Err("thresholds must be ascending percentages".into());
        }
        let frames = self.scattering.n_frames(self.channel.n_samples) * self.timestamps;
        if (frames as f64) < 3.0 * self.tsne.perplexity {
            return Err(format!(
                "{frames} frames per embedding are too few for perplexity {}",
                self.tsne.perplexity
            ));
        }
        Ok(())
    }

    /// Subcarrier choices, one per timestamp, in lexicographic order.
    pub fn pairs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..self.timestamps {
            out = out
                .into_iter()
                .flat_map(|p| {
                    self.subcarriers.iter().map(move |&k| {
                        let mut q = p.clone();
                        q.push(k);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// CSI samples consumed per seed: each timestamp is one capture.
    pub fn samples_per_seed(&self) -> usize {
        self.timestamps * self.channel.n_samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn dotted_sections_override_fields() {
        let cfg = ExperimentConfig::from_toml("n_seeds = 2\n[channel]\ndoppler_norm = 0.002\n[tsne]\nn_iter = 400\n").unwrap();
        assert_eq!(cfg.n_seeds, 2);
        assert_eq!(cfg.channel.doppler_norm, 0.002);
        assert_eq!(cfg.tsne.n_iter, 400);
        assert_eq!(cfg.tsne.perplexity, TsneConfig::default().perplexity);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::mobile();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("n_seeds = 0").is_err());
        assert!(ExperimentConfig::from_toml("subcarriers = [5]").is_err());
        assert!(ExperimentConfig::from_toml("thresholds = [10.0, 5.0]").is_err());
        assert!(ExperimentConfig::from_toml("unknown = 1").is_err());
        assert!(ExperimentConfig::from_toml("[channel]\nam_depth = 2.0").is_err());
    }

    #[test]
    fn pairs_take_one_subcarrier_per_timestamp() {
        let cfg = ExperimentConfig { subcarriers: vec![3, 7], ..ExperimentConfig::default() };
        assert_eq!(cfg.pairs(), vec![vec![3, 3], vec![3, 7], vec![7, 3], vec![7, 7]]);
        let one = ExperimentConfig { timestamps: 1, ..cfg };
        assert_eq!(one.pairs(), vec![vec![3], vec![7]]);
    }

    #[test]
    fn shipped_configs_match_the_built_in_ones() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        assert_eq!(ExperimentConfig::load(&dir.join("static.toml")).unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::load(&dir.join("mobile.toml")).unwrap(), ExperimentConfig::mobile());
    }
}
