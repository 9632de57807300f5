//! The `simulate` command: a synthetic dataset with known effects plus a
//! pipeline config that analyzes it.

use std::path::{Path, PathBuf};

use disclosure_core::synthcohort::{
    generate_cohort, materialize, style_fixture, write_materialized, write_style_fixture, StyleParams, EVENTS_FILE,
    SCORES_FILE,
};
use disclosure_core::SynthConfig;

use crate::config::{DistanceInputs, EstimateOptions, Inputs, LabelOptions, PanelOptions, PipelineConfig};
use crate::error::{io_context, Result};

pub const PIPELINE_FILE: &str = "pipeline.toml";
pub const STYLE_DIR: &str = "style";

/// Pipeline settings matching a scenario, with paths relative to the
/// simulation directory.
pub fn pipeline_for(cfg: &SynthConfig) -> PipelineConfig {
    let style = PathBuf::from(STYLE_DIR);
    PipelineConfig {
        inputs: Inputs {
            events: EVENTS_FILE.into(),
            scores: SCORES_FILE.into(),
            taxonomy: None,
        },
        ingest: Default::default(),
        label: LabelOptions {
            identities: cfg.identities.iter().map(|i| i.name.clone()).collect(),
            window_start: None,
            window_end: None,
        },
        panel: PanelOptions {
            outcomes: cfg.analysis.outcomes.clone(),
            ..Default::default()
        },
        estimate: EstimateOptions {
            spec: cfg.analysis.spec.clone(),
            offset: cfg.analysis.offset,
            ..Default::default()
        },
        distances: Some(DistanceInputs {
            ap: style.join("ap"),
            pre: style.join("pre"),
            post: style.join("post"),
        }),
        output: Some(PathBuf::from("out")),
    }
}

/// Materialize `cfg` into `dir` and return the pipeline config path.
pub fn simulate(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    let cohort = generate_cohort(cfg)?;
    let m = materialize(&cohort)?;
    write_materialized(dir, &cohort, &m)?;
    let fixture = style_fixture(cfg.seed, StyleParams::default())?;
    write_style_fixture(&dir.join(STYLE_DIR), &fixture)?;
    let path = dir.join(PIPELINE_FILE);
    io_context(std::fs::write(&path, pipeline_for(cfg).to_toml()), &path)?;
    log::info!(
        "simulated {} users, {} events into {}",
        cohort.users.len(),
        m.events.len(),
        dir.display()
    );
    Ok(path)
}
