//! JSON experiment configs. Every field has a default, so `{}` (or no
//! `--config` at all) runs the documented default experiment; unknown keys
//! are rejected with the offending line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use ssmlab::precision::PrecisionSpec;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PrecisionConfig {
    pub mantissa_bits: u32,
    pub min_exponent: i32,
    pub max_exponent: i32,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        let d = PrecisionSpec::default();
        Self {
            mantissa_bits: d.mantissa_bits(),
            min_exponent: d.min_exponent(),
            max_exponent: d.max_exponent(),
        }
    }
}

impl PrecisionConfig {
    pub fn spec(&self) -> anyhow::Result<PrecisionSpec> {
        PrecisionSpec::new(self.mantissa_bits, self.min_exponent, self.max_exponent)
            .map_err(|e| invalid(format!("precision: {e}")))
    }
}

/// `certify`: one collapse certificate.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// `mamba2`, `hybrid`, `modcount:N` or `parity-signed`.
    pub model: String,
    /// `ones:T`, `cycle:k,m,C` or `impulse:W,C` / `impulse:auto,C`.
    pub family: String,
    pub precision: PrecisionConfig,
    /// Cap on simulated cycles.
    pub t_max: usize,
    /// Seed for the random named models.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            model: "mamba2".into(),
            family: "ones:100000".into(),
            precision: PrecisionConfig::default(),
            t_max: 100_000,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Parity,
    Offset,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OffsetConfig {
    pub isi_len: usize,
    pub iti_min: usize,
    pub iti_max: usize,
    pub seq_len: usize,
    /// Gap between the stimuli of the two-stimulus probe.
    pub gap: usize,
}

impl Default for OffsetConfig {
    fn default() -> Self {
        Self {
            isi_len: 10,
            iti_min: 20,
            iti_max: 40,
            seq_len: 200,
            gap: 60,
        }
    }
}

/// `train`: parity table or offset prediction runs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCommandConfig {
    pub experiment: Experiment,
    /// Model kinds (`RNN`, `S4D`, `Mamba`, `Mamba+S4D`); empty means all
    /// four for parity and S4D plus Mamba for offset.
    pub models: Vec<String>,
    /// Number of seeds, counted up from `seed`.
    pub seeds: usize,
    pub seed: u64,
    pub train_len: usize,
    pub eval_lengths: Vec<usize>,
    pub eval_count: usize,
    /// Overrides of the per-model defaults.
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub offset: OffsetConfig,
    /// Emit SVG trace plots for offset runs.
    pub plots: bool,
    pub out: Option<PathBuf>,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Parity,
            models: Vec::new(),
            seeds: 3,
            seed: 0,
            train_len: 8,
            eval_lengths: vec![64, 1024, 10_000],
            eval_count: 1024,
            learning_rate: None,
            epochs: None,
            offset: OffsetConfig::default(),
            plots: true,
            out: None,
        }
    }
}

/// `construct`: oracle checks of a hand-built model.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConstructConfig {
    /// `modcount`, `offset` or `parity-signed`.
    pub construction: String,
    pub n: usize,
    /// modcount: longest checked prefix of `1^t`.
    pub t_max: usize,
    /// offset: random sequences and their maximum length (`40 n` when unset).
    pub trials: usize,
    pub max_len: Option<usize>,
    /// parity-signed: exhaustive length bound and the random strings.
    pub exhaustive_len: usize,
    pub random_count: usize,
    pub random_len: usize,
    /// parity-signed: also check with the state rounded to this precision.
    pub precision: Option<PrecisionConfig>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            construction: "modcount".into(),
            n: 3,
            t_max: 10_000,
            trials: 200,
            max_len: None,
            exhaustive_len: 14,
            random_count: 1000,
            random_len: 10_000,
            precision: Some(PrecisionConfig::default()),
            seed: 0,
            out: None,
        }
    }
}

/// `psd-check`: random PSD products.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PsdConfig {
    pub dim: usize,
    pub trials: usize,
    /// Zero a random number of columns of each Gram factor.
    pub rank_deficient: bool,
    /// Extra random general pairs for the `ST`/`TS` spectrum check.
    pub spectrum_trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            dim: 6,
            trials: 1000,
            rank_deficient: true,
            spectrum_trials: 500,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Zoo {
    #[default]
    NonNegative,
    Hybrid,
}

/// `sweep`: collapse certificates over a random model zoo.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub zoo: Zoo,
    pub count: usize,
    /// Defaults to `ones:100000` for non-negative stacks and
    /// `impulse:auto,100000` for hybrids.
    pub family: Option<String>,
    pub max_depth: usize,
    pub max_state: usize,
    pub max_den: u64,
    pub precision: PrecisionConfig,
    pub t_max: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            zoo: Zoo::NonNegative,
            count: 50,
            family: None,
            max_depth: 3,
            max_state: 8,
            max_den: 8,
            precision: PrecisionConfig::default(),
            t_max: 100_000,
            seed: 0,
            out: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse<T: DeserializeOwned>(s: &str) -> Result<T, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse::<CertifyConfig>("{}").unwrap(), CertifyConfig::default());
        assert_eq!(parse::<TrainCommandConfig>("{}").unwrap(), TrainCommandConfig::default());
        assert_eq!(parse::<PsdConfig>("{}").unwrap(), PsdConfig::default());
    }

    #[test]
    fn unknown_keys_report_their_position() {
        let err = parse::<PsdConfig>("{\n  \"dim\": 3,\n  \"dimm\": 4\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimm") && msg.contains("line 3"), "{msg}");
        assert!(parse::<CertifyConfig>(r#"{"precision": {"bits": 3}}"#).is_err());
    }

    #[test]
    fn enums_use_kebab_case() {
        let c: TrainCommandConfig = parse(r#"{"experiment": "offset"}"#).unwrap();
        assert_eq!(c.experiment, Experiment::Offset);
        let s: SweepConfig = parse(r#"{"zoo": "hybrid"}"#).unwrap();
        assert_eq!(s.zoo, Zoo::Hybrid);
    }
}
