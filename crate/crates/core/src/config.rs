//! Run configuration shared by the command-line subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::train::PipelineConfig;

pub const SEED_ENV: &str = "SWMT_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synthetic: SyntheticConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// 40 synthetic videos of ~300 frames, 50 + 100 epochs.
    pub fn desk() -> Self {
        Self { synthetic: SyntheticConfig::desk(), pipeline: PipelineConfig::desk(), ..Self::default() }
    }

    /// Parses and validates; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.pipeline.validate()?;
        self.eval.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Seed precedence: flag, then config file, then `SWMT_SEED`. `None` when
/// none of them is set.
pub fn explicit_seed(flag: Option<u64>, file: Option<u64>) -> Result<Option<u64>> {
    if let Some(s) = flag.or(file) {
        return Ok(Some(s));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| Error::config(SEED_ENV, format!("`{v}` is not an unsigned integer")))
        }
        Err(_) => Ok(None),
    }
}

pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    Ok(explicit_seed(flag, file)?.unwrap_or(DEFAULT_SEED))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
        let desk = RunConfig::desk();
        assert_eq!(RunConfig::from_json(&desk.to_json().unwrap()).unwrap(), desk);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"pipeline": {"stage1": {"sgd": {"lr": 1e-4, "bogus": 1}}}}"#).unwrap_err();
        match e {
            Error::Config { path, .. } => assert!(path.starts_with("pipeline.stage1.sgd"), "{path}"),
            other => panic!("{other}"),
        }
        let e = RunConfig::from_json(r#"{"synthetic": {"swap_p5_p6_prob": 1.5}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "synthetic.swap_p5_p6_prob"));
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::from_json(r#"{"eval": {"smooth_window": 4}}"#).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "eval.smooth_window"));
        assert!(RunConfig::from_json(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2)).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2)).unwrap(), 2);
    }
}
