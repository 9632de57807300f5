//! The pipeline configuration file.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Command-line flags override the file, which overrides the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Newline-delimited JSON events, optionally gzip-compressed.
    pub events: PathBuf,
    /// Classifier scores: event_id, score_name, value.
    pub scores: PathBuf,
    /// Taxonomy file; the bundled taxonomy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestOptions {
    pub strict: bool,
    pub langs: Vec<String>,
    pub exclude_verified: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            strict: true,
            langs: vec!["en".into()],
            exclude_verified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelOptions {
    pub identities: Vec<String>,
    /// Observation window `[window_start, window_end)` in UTC seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_end: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelOptions {
    pub outcomes: Vec<String>,
    pub window_days: i64,
    pub threshold: f64,
    pub ego_weeks: i64,
    pub quotes_as_retweets: bool,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            outcomes: vec!["identity_tweets".into()],
            window_days: 30,
            threshold: 0.5,
            ego_weeks: 12,
            quotes_as_retweets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateOptions {
    pub spec: String,
    pub offset: bool,
    pub alpha: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            spec: "did".into(),
            offset: false,
            alpha: 0.05,
        }
    }
}

/// Directories each holding `topics.csv` and `styles.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceInputs {
    pub ap: PathBuf,
    pub pre: PathBuf,
    pub post: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub ingest: IngestOptions,
    pub label: LabelOptions,
    #[serde(default)]
    pub panel: PanelOptions,
    #[serde(default)]
    pub estimate: EstimateOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<DistanceInputs>,
    /// Output directory; `out` next to the config file by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    /// Load `path` and make every relative path absolute against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Ok(cfg.resolved(base))
    }

    fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.events);
        fix(&mut self.inputs.scores);
        if let Some(t) = &mut self.inputs.taxonomy {
            fix(t);
        }
        if let Some(d) = &mut self.distances {
            fix(&mut d.ap);
            fix(&mut d.pre);
            fix(&mut d.post);
        }
        let mut out = self.output.take().unwrap_or_else(|| PathBuf::from("out"));
        fix(&mut out);
        self.output = Some(out);
        self
    }

    /// Settings that determine the results: everything except where files
    /// live. Hashed into the manifest.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.inputs.events = file_name(&c.inputs.events);
        c.inputs.scores = file_name(&c.inputs.scores);
        c.inputs.taxonomy = c.inputs.taxonomy.as_deref().map(file_name);
        if let Some(d) = &mut c.distances {
            d.ap = file_name(&d.ap);
            d.pre = file_name(&d.pre);
            d.post = file_name(&d.post);
        }
        c.output = None;
        c.to_toml()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn file_name(p: &Path) -> PathBuf {
    p.file_name().map(PathBuf::from).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[inputs]
events = "events.jsonl"
scores = "scores.csv"

[label]
identities = ["gender:women"]
"#;

    #[test]
    fn defaults_and_resolution() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap().resolved(Path::new("/data/run"));
        assert_eq!(cfg.inputs.events, PathBuf::from("/data/run/events.jsonl"));
        assert_eq!(cfg.output_dir(), PathBuf::from("/data/run/out"));
        assert!(cfg.ingest.strict);
        assert_eq!(cfg.panel.window_days, 30);
        assert_eq!(cfg.estimate.spec, "did");
    }

    #[test]
    fn fingerprint_ignores_locations() {
        let a = PipelineConfig::from_toml(MINIMAL).unwrap().resolved(Path::new("/x"));
        let b = PipelineConfig::from_toml(MINIMAL).unwrap().resolved(Path::new("/y/z"));
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = b.clone();
        c.estimate.alpha = 0.01;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
    }
}
