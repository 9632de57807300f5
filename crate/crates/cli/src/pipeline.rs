//! The `run` command: every stage in order over one output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use disclosure_core::identity_rules::ObservationWindow;
use disclosure_core::ingest::FilterPolicy;
use disclosure_core::{IdentityId, OutcomeKind};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::manifest::{
    digest_tree, sha256_bytes, sha256_file, write_json, FunnelRow, Manifest, StageRecord, MANIFEST_FILE, TIMINGS_FILE,
};
use crate::report::report_files;
use crate::stages::{self, slug, Counts, PanelInputs};

pub const TIMELINES_FILE: &str = "timelines.csv";
pub const EFFECTS_FILE: &str = "effects.csv";
pub const SHIFT_FILE: &str = "shift.csv";
pub const REPORT_DIR: &str = "report";

/// Per-identity file `<dir>/<slug>.csv` under the output directory.
pub fn identity_file(out: &Path, dir: &str, identity: &IdentityId) -> PathBuf {
    out.join(dir).join(format!("{}.csv", slug(identity)))
}

/// Settings checked before any data is read.
struct Plan {
    identities: Vec<IdentityId>,
    outcomes: Vec<OutcomeKind>,
    window: ObservationWindow,
    policy: FilterPolicy,
}

fn plan(cfg: &PipelineConfig, matcher: &disclosure_core::Matcher) -> Result<Plan> {
    if cfg.label.identities.is_empty() {
        return Err(CliError::config("label.identities is empty"));
    }
    let identities = cfg
        .label
        .identities
        .iter()
        .map(|n| matcher.resolve(n))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if cfg.panel.outcomes.is_empty() {
        return Err(CliError::config("panel.outcomes is empty"));
    }
    let outcomes = cfg
        .panel
        .outcomes
        .iter()
        .map(|o| o.parse::<OutcomeKind>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let window = match (cfg.label.window_start, cfg.label.window_end) {
        (None, None) => ObservationWindow::UNBOUNDED,
        (s, e) => ObservationWindow::new(s.unwrap_or(i64::MIN), e.unwrap_or(i64::MAX))
            .map_err(|e| CliError::config(e.to_string()))?,
    };
    if cfg.ingest.langs.is_empty() {
        return Err(CliError::config("ingest.langs is empty"));
    }
    Ok(Plan {
        identities,
        outcomes,
        window,
        policy: FilterPolicy {
            allowed_langs: cfg.ingest.langs.iter().cloned().collect(),
            exclude_verified: cfg.ingest.exclude_verified,
        },
    })
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

struct Recorder {
    stages: Vec<StageRecord>,
    timings: Vec<Timing>,
}

impl Recorder {
    fn time<T>(&mut self, label: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f();
        self.timings.push(Timing {
            stage: label,
            seconds: start.elapsed().as_secs_f64(),
        });
        r
    }

    fn record(&mut self, stage: &str, identity: Option<&IdentityId>, outcome: Option<OutcomeKind>, counts: Counts) {
        self.stages.push(StageRecord {
            stage: stage.to_owned(),
            identity: identity.map(|i| i.to_string()),
            outcome: outcome.map(|o| o.as_str().to_owned()),
            counts,
        });
    }
}

fn find<'a>(stages: &'a [StageRecord], stage: &str, identity: Option<&str>) -> Option<&'a Counts> {
    stages
        .iter()
        .find(|s| s.stage == stage && s.identity.as_deref() == identity)
        .map(|s| &s.counts)
}

fn funnel(stages: &[StageRecord], identities: &[IdentityId]) -> Vec<FunnelRow> {
    let get = |c: Option<&Counts>, k: &str| c.and_then(|c| c.get(k)).copied().unwrap_or(0);
    let ingest = find(stages, "ingest", None);
    identities
        .iter()
        .map(|id| {
            let name = id.to_string();
            let label = find(stages, "label", Some(&name));
            let cohort = find(stages, "cohort", Some(&name));
            let m = find(stages, "match", Some(&name));
            FunnelRow {
                identity: name.clone(),
                users_ingested: get(ingest, "users"),
                users_kept: get(ingest, "users_kept"),
                treated: get(label, "identity_added"),
                control_candidates: get(label, "not_added"),
                with_covariates: get(cohort, "with_covariates"),
                matched_treated: get(m, "matched_treated"),
                unmatched_treated: get(m, "unmatched_treated"),
                matched_controls: get(m, "matched_controls"),
            }
        })
        .collect()
}

/// Run every stage. The manifest is written whether or not a stage fails;
/// a failed run records the failing stage and its error.
pub fn run(cfg: &PipelineConfig) -> Result<Manifest> {
    let out = cfg.output_dir();
    let matcher = stages::load_matcher(cfg.inputs.taxonomy.as_deref()).map_err(|e| e.at("config"))?;
    let plan = plan(cfg, &matcher).map_err(|e| e.at("config"))?;
    let spec = stages::model_spec(&cfg.estimate.spec, cfg.estimate.offset).map_err(|e| e.at("config"))?;
    let panel_cfg = stages::panel_config(
        cfg.panel.window_days,
        cfg.panel.threshold,
        cfg.panel.ego_weeks,
        cfg.panel.quotes_as_retweets,
    )
    .map_err(|e| e.at("config"))?;
    if !(cfg.estimate.alpha > 0.0 && cfg.estimate.alpha < 1.0) {
        return Err(CliError::config(format!("alpha must lie in (0, 1), got {}", cfg.estimate.alpha)).at("config"));
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::data(format!("{}: {e}", out.display())).at("config"))?;

    let mut rec = Recorder {
        stages: Vec::new(),
        timings: Vec::new(),
    };
    let mut inputs = BTreeMap::new();
    let result = stages_in_order(cfg, &out, &matcher, &plan, &spec, panel_cfg, &mut inputs, &mut rec);

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        status: if result.is_ok() { "ok" } else { "failed" }.to_owned(),
        error: result.as_ref().err().map(|e| e.to_string()),
        config_sha256: sha256_bytes(cfg.fingerprint().as_bytes()),
        inputs,
        funnel: funnel(&rec.stages, &plan.identities),
        stages: rec.stages,
        outputs: digest_tree(&out)?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    write_json(&out.join(TIMINGS_FILE), &rec.timings)?;
    result.map(|()| manifest)
}

fn key(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
fn stages_in_order(
    cfg: &PipelineConfig,
    out: &Path,
    matcher: &disclosure_core::Matcher,
    plan: &Plan,
    spec: &disclosure_core::ModelSpec,
    panel_cfg: disclosure_core::panel::PanelConfig,
    inputs: &mut BTreeMap<String, String>,
    rec: &mut Recorder,
) -> Result<()> {
    rec.time("digest inputs".into(), || {
        inputs.insert(key(&cfg.inputs.events), sha256_file(&cfg.inputs.events)?);
        inputs.insert(key(&cfg.inputs.scores), sha256_file(&cfg.inputs.scores)?);
        if let Some(t) = &cfg.inputs.taxonomy {
            inputs.insert(key(t), sha256_file(t)?);
        }
        if let Some(d) = &cfg.distances {
            for (group, dir) in [("ap", &d.ap), ("pre", &d.pre), ("post", &d.post)] {
                for f in [disclosure_core::synthcohort::TOPICS_FILE, disclosure_core::synthcohort::STYLES_FILE] {
                    inputs.insert(format!("{group}/{f}"), sha256_file(&dir.join(f))?);
                }
            }
        }
        Ok(())
    })
    .map_err(|e| e.at("ingest"))?;

    let parsed = rec
        .time("read events".into(), || stages::load_events(&cfg.inputs.events, cfg.ingest.strict))
        .map_err(|e| e.at("ingest"))?;
    let timelines = out.join(TIMELINES_FILE);
    let c = rec
        .time("ingest".into(), || stages::ingest(&parsed, &plan.policy, &timelines))
        .map_err(|e| e.at("ingest"))?;
    rec.record("ingest", None, None, c);

    let scores = rec
        .time("read scores".into(), || stages::load_scores(&cfg.inputs.scores))
        .map_err(|e| e.at("panel"))?;
    let panel_inputs = PanelInputs {
        events: &parsed.events,
        scores: &scores,
        matcher,
        config: panel_cfg,
    };

    let mut panels = Vec::new();
    for id in &plan.identities {
        let cohort = identity_file(out, "cohort", id);
        let covariates = identity_file(out, "covariates", id);
        let matches = identity_file(out, "matches", id);
        let balance = identity_file(out, "balance", id);
        let panel = identity_file(out, "panel", id);

        let c = rec
            .time(format!("label {id}"), || stages::label(matcher, &timelines, id, plan.window, &cohort))
            .map_err(|e| e.at("label"))?;
        rec.record("label", Some(id), None, c);
        let c = rec
            .time(format!("cohort {id}"), || stages::cohort(&cohort, &parsed.events, &covariates))
            .map_err(|e| e.at("cohort"))?;
        rec.record("cohort", Some(id), None, c);
        let c = rec
            .time(format!("match {id}"), || stages::match_stage(&cohort, &covariates, &matches, &balance))
            .map_err(|e| e.at("match"))?;
        rec.record("match", Some(id), None, c);
        let per_outcome = rec
            .time(format!("panel {id}"), || {
                stages::panel(&panel_inputs, id, &plan.outcomes, &matches, &covariates, &panel)
            })
            .map_err(|e| e.at("panel"))?;
        for (kind, c) in per_outcome {
            check_panel_funnel(&c).map_err(|e| e.at("panel"))?;
            rec.record("panel", Some(id), Some(kind), c);
        }
        panels.push(panel);
    }

    let effects = out.join(EFFECTS_FILE);
    let c = rec
        .time("estimate".into(), || stages::estimate(&panels, spec, cfg.estimate.alpha, &effects))
        .map_err(|e| e.at("estimate"))?;
    rec.record("estimate", None, None, c);

    if let Some(d) = &cfg.distances {
        let c = rec
            .time("distances".into(), || stages::distances(&d.ap, &d.pre, &d.post, &out.join(SHIFT_FILE)))
            .map_err(|e| e.at("distances"))?;
        rec.record("distances", None, None, c);
    }

    let balances: Vec<PathBuf> = plan.identities.iter().map(|id| identity_file(out, "balance", id)).collect();
    let c = rec
        .time("report".into(), || report_files(&effects, &balances, &out.join(REPORT_DIR)))
        .map_err(|e| e.at("report"))?;
    rec.record("report", None, None, c);
    Ok(())
}

/// Every matched user is either in the panel, flagged or missing, and each
/// included user contributes exactly two rows.
fn check_panel_funnel(c: &Counts) -> Result<()> {
    let g = |k: &str| c.get(k).copied().unwrap_or(0);
    let included = g("treated_in_panel") + g("controls_in_panel");
    if g("rows") != 2 * included {
        return Err(CliError::data(format!("panel has {} rows for {included} users", g("rows"))));
    }
    let matched = g("matched_treated") + g("matched_controls");
    if included + g("flagged") + g("missing") != matched {
        return Err(CliError::data(format!(
            "panel accounts for {} of {matched} matched users",
            included + g("flagged") + g("missing")
        )));
    }
    Ok(())
}
