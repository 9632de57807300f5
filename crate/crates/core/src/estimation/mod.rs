//! Difference-in-differences count regressions: negative-binomial fits with
//! cluster-robust errors, percent effects and Holm correction.

mod design;
mod effects;
mod experiment;
mod gee;
mod holm;

pub use design::{build_design, Design, Family, ModelSpec, Term};
pub use effects::{
    cell_ratio_of_ratios, effect_percent, percent_interval, read_effects, write_effects, Direction, EffectReport,
    EFFECT_HEADER,
};
pub use experiment::{run_experiment, spec_for, Experiment, FitFailure, REPORTED_TERMS};
pub use gee::{fit_design, fit_nb_gee, moment_alpha, normal_p, FitResult, TermEstimate};
pub use holm::holm_correct;
