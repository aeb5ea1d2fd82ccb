use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvmStatistic;
use crate::nn::{ArchConfig, TrainConfig};
use crate::signal::{BandlimitedSpec, DEFAULT_SAMPLE_RATE_HZ};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// A saved bundle, or a CSV file with one signal per row.
    Bundle {
        path: PathBuf,
        #[serde(default = "default_rate")]
        csv_sample_rate_hz: f64,
    },
    /// One long band-limited Gaussian record cut into segments.
    Bandlimited {
        n_signals: usize,
        segment_len: usize,
        #[serde(default = "default_corpus_sigma")]
        sigma: f64,
        #[serde(default = "default_cutoff")]
        cutoff: f64,
        #[serde(default = "default_noise_ratio")]
        noise_ratio: f64,
        #[serde(default = "default_taps")]
        taps: usize,
    },
    /// One long white Gaussian record cut into segments.
    Gaussian {
        n_signals: usize,
        segment_len: usize,
        #[serde(default = "one")]
        sigma: f64,
    },
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}
fn default_corpus_sigma() -> f64 {
    2.0
}
fn default_cutoff() -> f64 {
    BandlimitedSpec::default().cutoff
}
fn default_noise_ratio() -> f64 {
    BandlimitedSpec::default().noise_ratio
}
fn default_taps() -> usize {
    BandlimitedSpec::default().taps
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.7, test_fraction: 0.3, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    #[serde(alias = "uncompanded")]
    None,
    MuLaw,
    Autoencoder,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::None => "none",
            Arm::MuLaw => "mu_law",
            Arm::Autoencoder => "autoencoder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    #[default]
    Train,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub mode: ModelMode,
    pub source_model: Option<PathBuf>,
    pub destination_model: Option<PathBuf>,
    pub noisy_destination_model: Option<PathBuf>,
    pub source_arch: ArchConfig,
    pub destination_arch: ArchConfig,
    pub source_train: TrainConfig,
    pub destination_train: TrainConfig,
    /// Input SNRs mixed in equal shares when training the noisy destination model.
    pub noisy_train_snr_db: Vec<f64>,
    /// Train destination models on amplifier outputs rather than on the raw
    /// source outputs.
    pub train_through_hpa: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            mode: ModelMode::Train,
            source_model: None,
            destination_model: None,
            noisy_destination_model: None,
            source_arch: ArchConfig::default(),
            destination_arch: ArchConfig::default(),
            source_train: TrainConfig::default(),
            destination_train: TrainConfig { stop_at_loss_floor: false, ..TrainConfig::default() },
            noisy_train_snr_db: vec![-5.0, 0.0],
            train_through_hpa: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompanderConfig {
    pub arms: Vec<Arm>,
    pub mu: f64,
    pub autoencoder: AutoencoderConfig,
}

impl Default for CompanderConfig {
    fn default() -> Self {
        Self {
            arms: vec![Arm::None, Arm::MuLaw, Arm::Autoencoder],
            mu: crate::compander::DEFAULT_MU,
            autoencoder: AutoencoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpaConfig {
    /// Saturation level; `None` takes the mean per-signal power of the training set.
    pub a_sat: Option<f64>,
    pub gain_a: f64,
    pub p: f64,
}

impl Default for HpaConfig {
    fn default() -> Self {
        Self { a_sat: None, gain_a: 1.0, p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub ccdf: bool,
    pub power_ratio: bool,
    pub evm: bool,
    pub evm_statistic: EvmStatistic,
    pub psd: bool,
    pub snr_d: bool,
    pub constellations: bool,
    pub ccdf_from_db: f64,
    pub ccdf_to_db: f64,
    pub ccdf_step_db: f64,
    /// PSD bins at or above this fraction of the Nyquist frequency count as high band.
    pub psd_high_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ccdf: true,
            power_ratio: true,
            evm: true,
            evm_statistic: EvmStatistic::Rms,
            psd: true,
            snr_d: true,
            constellations: true,
            ccdf_from_db: 0.0,
            ccdf_to_db: 14.0,
            ccdf_step_db: 0.5,
            psd_high_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default)]
    pub compander: CompanderConfig,
    /// Amplifier stage; omitted or null disables it.
    #[serde(default)]
    pub hpa: Option<HpaConfig>,
    #[serde(default)]
    pub ibo_db: f64,
    #[serde(default)]
    pub channel: Option<ChannelConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
}

fn default_window() -> usize {
    5
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::format(
                "schema_version",
                format!("unsupported {} (expected {CONFIG_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.test_fraction > 0.0 && (s.train_fraction + s.test_fraction - 1.0).abs() < 1e-9) {
            return Err(Error::param("split", "fractions must be positive and sum to 1"));
        }
        if self.smoothing_window.is_multiple_of(2) {
            return Err(Error::param("smoothing_window", "must be odd"));
        }
        if !(self.ibo_db.is_finite() && self.ibo_db >= 0.0) {
            return Err(Error::param("ibo_db", "must be non-negative"));
        }
        if self.compander.arms.is_empty() {
            return Err(Error::param("compander.arms", "at least one arm is required"));
        }
        let ae = &self.compander.autoencoder;
        if self.compander.arms.contains(&Arm::Autoencoder) && ae.mode == ModelMode::Load {
            let required = [("source_model", &ae.source_model), ("destination_model", &ae.destination_model)];
            for (name, p) in required {
                match p {
                    Some(p) if p.exists() => {}
                    Some(p) => return Err(Error::param("compander.autoencoder", format!("{name} {} does not exist", p.display()))),
                    None => return Err(Error::param("compander.autoencoder", format!("{name} is required in load mode"))),
                }
            }
            if let Some(p) = &ae.noisy_destination_model {
                if !p.exists() {
                    return Err(Error::param("compander.autoencoder", format!("{} does not exist", p.display())));
                }
            }
        }
        if let Some(ch) = &self.channel {
            if ch.snr_db.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("channel.snr_db", "values must be finite"));
            }
        }
        if ae.noisy_train_snr_db.is_empty() {
            return Err(Error::param("noisy_train_snr_db", "needs at least one value"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"schema_version":1,"dataset":{"kind":"gaussian","n_signals":10,"segment_len":64},"output_dir":"out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.split, SplitConfig::default());
        assert_eq!(cfg.compander.arms.len(), 3);
        assert!(cfg.hpa.is_none() && cfg.channel.is_none());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = r#"{"schema_version":1,"dataset":{"kind":"gaussian","n_signals":10,"segment_len":64},"output_dir":"o""#;
        for extra in [
            r#","split":{"train_fraction":0.5,"test_fraction":0.4,"seed":1}"#,
            r#","ibo_db":-1"#,
            r#","unknown_field":3"#,
            r#","compander":{"autoencoder":{"mode":"load"}}"#,
            r#","smoothing_window":4"#,
        ] {
            assert!(ExperimentConfig::from_json(&format!("{base}{extra}}}")).is_err(), "{extra}");
        }
        assert!(ExperimentConfig::from_json(r#"{"schema_version":2,"dataset":{"kind":"gaussian","n_signals":1,"segment_len":8},"output_dir":"o"}"#).is_err());
    }
}
