//! Pipeline configuration: a flat `key = value` file overlaid by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;
use vessel_core::raster::ClaheParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err("expected json or csv".into()),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub clahe_clip: f64,
    pub clahe_tiles_x: usize,
    pub clahe_tiles_y: usize,
    pub gamma: f64,
    pub min_spur: usize,
    pub min_component: usize,
    /// Harmonics kept per vessel.
    pub harmonics: usize,
    /// Sample count for the spectral self-checks.
    pub oracle_samples: usize,
    pub workers: usize,
    pub seed: u64,
    pub format: Format,
    /// Tolerance of the tortuosity self-checks.
    pub tau_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let clahe = ClaheParams::default();
        Self {
            inputs: Vec::new(),
            out: PathBuf::from("out"),
            clahe_clip: clahe.clip_limit,
            clahe_tiles_x: clahe.tiles_x,
            clahe_tiles_y: clahe.tiles_y,
            gamma: 1.0,
            min_spur: 10,
            min_component: 30,
            harmonics: 24,
            oracle_samples: 4096,
            workers: 1,
            seed: 42,
            format: Format::Json,
            tau_tolerance: 1e-3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "inputs" => {
                self.inputs = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "out" => self.out = PathBuf::from(value),
            "clahe_clip" => self.clahe_clip = parse(key, value)?,
            "clahe_tiles_x" => self.clahe_tiles_x = parse(key, value)?,
            "clahe_tiles_y" => self.clahe_tiles_y = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "min_spur" => self.min_spur = parse(key, value)?,
            "min_component" => self.min_component = parse(key, value)?,
            "harmonics" => self.harmonics = parse(key, value)?,
            "oracle_samples" => self.oracle_samples = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "format" => self.format = parse(key, value)?,
            "tau_tolerance" => self.tau_tolerance = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::BadValue { key: key.into(), value, reason: reason.into() })
        };
        if self.workers < 1 {
            return bad("workers", self.workers.to_string(), "need at least one worker");
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma", self.gamma.to_string(), "must be positive");
        }
        if !(self.clahe_clip.is_finite() && self.clahe_clip > 0.0) {
            return bad("clahe_clip", self.clahe_clip.to_string(), "must be positive");
        }
        if self.clahe_tiles_x < 1 || self.clahe_tiles_y < 1 {
            return bad(
                "clahe_tiles",
                format!("{}x{}", self.clahe_tiles_x, self.clahe_tiles_y),
                "need at least one tile",
            );
        }
        if self.oracle_samples < 64 {
            return bad("oracle_samples", self.oracle_samples.to_string(), "need at least 64");
        }
        if !(self.tau_tolerance.is_finite() && self.tau_tolerance > 0.0) {
            return bad("tau_tolerance", self.tau_tolerance.to_string(), "must be positive");
        }
        Ok(())
    }

    pub fn clahe(&self) -> ClaheParams {
        ClaheParams { clip_limit: self.clahe_clip, tiles_x: self.clahe_tiles_x, tiles_y: self.clahe_tiles_y }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let cfg =
            PipelineConfig::from_text("# run\nharmonics = 12\nformat=csv\n\ninputs = a.pgm, b.pgm\nworkers = 3\n")
                .unwrap();
        assert_eq!(cfg.harmonics, 12);
        assert_eq!(cfg.format, Format::Csv);
        assert_eq!(cfg.inputs, vec![PathBuf::from("a.pgm"), PathBuf::from("b.pgm")]);
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.min_spur, 10);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(PipelineConfig::from_text("harmonics 3"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(PipelineConfig::from_text("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(PipelineConfig::from_text("min_spur = -1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(PipelineConfig::from_text("workers = 0"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(PipelineConfig::from_text("format = xml"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(PipelineConfig::from_text("gamma = 0"), Err(ConfigError::BadValue { .. })));
    }
}
