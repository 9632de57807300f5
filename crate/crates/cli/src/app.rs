//! Command-line surface. Every subcommand maps onto one function in
//! [`crate::stages`], except `run`, which chains them.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use disclosure_core::identity_rules::ObservationWindow;
use disclosure_core::ingest::FilterPolicy;
use disclosure_core::{OutcomeKind, SynthConfig};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{pipeline, report, simulate, stages};

#[derive(Debug, Parser)]
#[command(name = "disclosure", version, about = "Estimate how disclosing an identity in a profile changes behavior")]
pub struct Cli {
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rebuild profile timelines from raw events and apply the user filters.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Fail on the first malformed record instead of skipping it.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        strict: bool,
        /// Allowed modal language; repeatable.
        #[arg(long = "lang", default_value = "en")]
        langs: Vec<String>,
        /// Keep verified accounts.
        #[arg(long)]
        keep_verified: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify users as disclosing, non-disclosing controls or excluded.
    Label {
        #[arg(long)]
        timelines: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long, requires = "window_end")]
        window_start: Option<i64>,
        #[arg(long, requires = "window_start")]
        window_end: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract pre-change covariates of treated users and control candidates.
    Cohort {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propensity-stratified nearest-neighbor matching with balance diagnostics.
    Match {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        balance: PathBuf,
    },
    /// Pre/post outcome panel of the matched users.
    Panel {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Outcome name; repeatable.
        #[arg(long = "outcome", default_value = "identity_tweets")]
        outcomes: Vec<String>,
        #[arg(long, default_value_t = 30)]
        window_days: i64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 12)]
        ego_weeks: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the negative-binomial GEE to one or more panels.
    Estimate {
        /// Panel file; repeatable.
        #[arg(long = "panel", required = true)]
        panels: Vec<PathBuf>,
        #[arg(long, default_value = "did")]
        spec: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        offset: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Topic and style distance from a reference group before and after.
    Distances {
        #[command(flatten)]
        groups: Groups,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with known effects.
    Simulate {
        /// Scenario file.
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Bundled scenario name.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from a pipeline config.
    Run(RunArgs),
    /// Forest plots and a summary from an effects file.
    Report {
        #[arg(long)]
        effects: PathBuf,
        /// Balance file; repeatable.
        #[arg(long)]
        balance: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Directories holding `topics.csv` and `styles.csv`.
#[derive(Debug, Args)]
pub struct Groups {
    #[arg(long)]
    pub ap: PathBuf,
    #[arg(long)]
    pub pre: PathBuf,
    #[arg(long)]
    pub post: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replaces the configured identities; repeatable.
    #[arg(long = "identity")]
    pub identities: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub spec: Option<String>,
}

fn print_counts(stage: &str, counts: &stages::Counts) {
    let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{stage}: {}", parts.join(" "));
}

fn load_scenario(config: Option<&Path>, scenario: Option<&str>) -> Result<SynthConfig> {
    Ok(match (config, scenario) {
        (Some(p), _) => SynthConfig::from_path(p)?,
        (None, Some(name)) => SynthConfig::bundled(name)?,
        (None, None) => return Err(CliError::config("simulate needs --config or --scenario")),
    })
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        // A pool that already exists (tests calling twice) is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Ingest {
            input,
            strict,
            langs,
            keep_verified,
            out,
        } => {
            let policy = FilterPolicy {
                allowed_langs: langs.into_iter().collect(),
                exclude_verified: !keep_verified,
            };
            let parsed = stages::load_events(&input, strict).map_err(|e| e.at("ingest"))?;
            let c = stages::ingest(&parsed, &policy, &out).map_err(|e| e.at("ingest"))?;
            print_counts("ingest", &c);
        }
        Command::Label {
            timelines,
            identity,
            taxonomy,
            window_start,
            window_end,
            out,
        } => {
            let matcher = stages::load_matcher(taxonomy.as_deref()).map_err(|e| e.at("label"))?;
            let id = matcher.resolve(&identity).map_err(|e| CliError::from(e).at("label"))?;
            let window = match (window_start, window_end) {
                (Some(s), Some(e)) => ObservationWindow::new(s, e).map_err(|e| CliError::config(e.to_string()))?,
                _ => ObservationWindow::UNBOUNDED,
            };
            let c = stages::label(&matcher, &timelines, &id, window, &out).map_err(|e| e.at("label"))?;
            print_counts("label", &c);
        }
        Command::Cohort { cohort, events, out } => {
            let parsed = stages::load_events(&events, true).map_err(|e| e.at("cohort"))?;
            let c = stages::cohort(&cohort, &parsed.events, &out).map_err(|e| e.at("cohort"))?;
            print_counts("cohort", &c);
        }
        Command::Match {
            cohort,
            covariates,
            out,
            balance,
        } => {
            let c = stages::match_stage(&cohort, &covariates, &out, &balance).map_err(|e| e.at("match"))?;
            print_counts("match", &c);
        }
        Command::Panel {
            events,
            scores,
            matches,
            covariates,
            identity,
            taxonomy,
            outcomes,
            window_days,
            threshold,
            ego_weeks,
            out,
        } => {
            let fail = |e: CliError| e.at("panel");
            let matcher = stages::load_matcher(taxonomy.as_deref()).map_err(fail)?;
            let id = matcher.resolve(&identity).map_err(|e| fail(e.into()))?;
            let kinds = outcomes
                .iter()
                .map(|o| o.parse::<OutcomeKind>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| fail(e.into()))?;
            let config = stages::panel_config(window_days, threshold, ego_weeks, true).map_err(fail)?;
            let parsed = stages::load_events(&events, true).map_err(fail)?;
            let scores = stages::load_scores(&scores).map_err(fail)?;
            let inputs = stages::PanelInputs {
                events: &parsed.events,
                scores: &scores,
                matcher: &matcher,
                config,
            };
            for (kind, c) in stages::panel(&inputs, &id, &kinds, &matches, &covariates, &out).map_err(fail)? {
                print_counts(&format!("panel {kind}"), &c);
            }
        }
        Command::Estimate {
            panels,
            spec,
            alpha,
            offset,
            out,
        } => {
            let spec = stages::model_spec(&spec, offset).map_err(|e| e.at("estimate"))?;
            let c = stages::estimate(&panels, &spec, alpha, &out).map_err(|e| e.at("estimate"))?;
            print_counts("estimate", &c);
        }
        Command::Distances { groups, out } => {
            let c = stages::distances(&groups.ap, &groups.pre, &groups.post, &out).map_err(|e| e.at("distances"))?;
            print_counts("distances", &c);
        }
        Command::Simulate {
            config,
            scenario,
            seed,
            out_dir,
        } => {
            let mut cfg = load_scenario(config.as_deref(), scenario.as_deref()).map_err(|e| e.at("simulate"))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let path = simulate::simulate(&cfg, &out_dir).map_err(|e| e.at("simulate"))?;
            println!("simulate: wrote {}", path.display());
        }
        Command::Run(args) => {
            let mut cfg = PipelineConfig::load(&args.config).map_err(|e| e.at("config"))?;
            if let Some(d) = args.out_dir {
                cfg.output = Some(d);
            }
            if !args.identities.is_empty() {
                cfg.label.identities = args.identities;
            }
            if let Some(a) = args.alpha {
                cfg.estimate.alpha = a;
            }
            if let Some(s) = args.spec {
                cfg.estimate.spec = s;
            }
            let manifest = pipeline::run(&cfg)?;
            for s in &manifest.stages {
                let label = [Some(s.stage.as_str()), s.identity.as_deref(), s.outcome.as_deref()]
                    .into_iter()
                    .flatten()
                    .collect::<Vec<_>>()
                    .join(" ");
                print_counts(&label, &s.counts);
            }
            println!("run: outputs in {}", cfg.output_dir().display());
        }
        Command::Report {
            effects,
            balance,
            out_dir,
        } => {
            let c = report::report_files(&effects, &balance, &out_dir).map_err(|e| e.at("report"))?;
            print_counts("report", &c);
        }
    }
    Ok(())
}
