//! JSON pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fmlc_core::{FusionRule, SmoothingParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tiff,
    Fmt,
}

impl Format {
    /// `.fmt` selects the tensor format, anything else TIFF.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("fmt") => Format::Fmt,
            _ => Format::Tiff,
        }
    }
}

fn default_smoothing() -> Option<SmoothingParams> {
    Some(SmoothingParams::default())
}

/// Inputs, rules and outputs of one run. `smoothing: null` disables the
/// smoothing stage; an absent key uses the default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<PathBuf>,
    /// Expert probability maps keyed by the flagged class of their rule.
    #[serde(default)]
    pub experts: BTreeMap<u8, PathBuf>,
    #[serde(default)]
    pub rules: Vec<FusionRule>,
    #[serde(default = "default_smoothing")]
    pub smoothing: Option<SmoothingParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            coarse: None,
            experts: BTreeMap::new(),
            rules: Vec::new(),
            smoothing: default_smoothing(),
            output: None,
            format: None,
            reference: None,
        }
    }
}

impl PipelineConfig {
    /// Loads a config file; relative paths inside it are taken from the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.coarse.iter_mut().for_each(fix);
        cfg.output.iter_mut().for_each(fix);
        cfg.reference.iter_mut().for_each(fix);
        cfg.experts.values_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn output_format(&self) -> Format {
        self.format
            .or_else(|| self.output.as_deref().map(Format::for_path))
            .unwrap_or(Format::Tiff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_key_semantics() {
        let absent: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(absent.smoothing, Some(SmoothingParams::default()));
        let off: PipelineConfig = serde_json::from_str(r#"{"smoothing": null}"#).unwrap();
        assert_eq!(off.smoothing, None);
    }

    #[test]
    fn expert_keys_are_class_ids() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"experts": {"1": "veg.fmt"}, "rules": [{"k": 1, "k_prime": 0}]}"#).unwrap();
        assert_eq!(cfg.experts[&1], PathBuf::from("veg.fmt"));
        assert_eq!(cfg.rules[0].tau, 0.5);
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"smoothin": null}"#).is_err());
    }

    #[test]
    fn format_follows_extension() {
        assert_eq!(Format::for_path(Path::new("a/b.FMT")), Format::Fmt);
        assert_eq!(Format::for_path(Path::new("a/b.tif")), Format::Tiff);
        let cfg = PipelineConfig {
            output: Some("x.fmt".into()),
            ..Default::default()
        };
        assert_eq!(cfg.output_format(), Format::Fmt);
    }
}
