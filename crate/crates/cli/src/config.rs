use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssmp_core::corpus::SynthConfig;
use ssmp_core::decode::DecodeMode;
use ssmp_core::encoder::EncoderConfig;
use ssmp_core::trainer::TrainConfig;

use crate::error::{CliError, Result};

/// Everything a command needs, as read from `--config` and then overridden
/// by flags. The resolved value is written next to the outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Filled in when resolving; ignored on input.
    pub command: String,
    /// Applied to every seeded component of the command.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthConfig,
    /// Number of pairs written by `synth`.
    pub pairs: Option<usize>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub decode: DecodeSection,
    /// Deviation radius for `evaluate`.
    #[serde(rename = "R")]
    pub radius: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub problem: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub mode: DecodeMode,
    pub k_max: usize,
    /// Trailer length; when absent it comes from the pair's music
    /// boundaries, then from the reference trailer.
    #[serde(rename = "J")]
    pub trailer_len: Option<usize>,
    /// Decode from the reference labels instead of a checkpoint.
    pub oracle: bool,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            mode: DecodeMode::SelfCorrective,
            k_max: 64,
            trailer_len: None,
            oracle: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::BadConfig {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::BadConfig {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}

/// Explicit seed, then the config file, then `SSMP_SEED`.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<Option<u64>> {
    if let Some(s) = flag.or(file) {
        return Ok(Some(s));
    }
    match std::env::var("SSMP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| crate::error::flags(format!("SSMP_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"decode": {"kmax": 3}}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"decode": {"J": 4}, "R": 2}"#).unwrap();
        assert_eq!(c.decode.trailer_len, Some(4));
        assert_eq!(c.radius, 2);
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig {
            command: "train".into(),
            seed: Some(3),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
