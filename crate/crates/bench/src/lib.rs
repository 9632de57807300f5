//! Shared inputs for the benchmarks.

use disclosure_core::synthcohort::{generate_cohort, Cohort};
use disclosure_core::SynthConfig;

/// A reduced copy of a bundled scenario.
pub fn small_cohort(scenario: &str, treated: usize, pool: usize) -> Cohort {
    let mut cfg = SynthConfig::bundled(scenario).expect("bundled scenario");
    cfg.n_treated = treated;
    cfg.n_control_pool = pool;
    generate_cohort(&cfg).expect("valid scenario")
}

/// Deterministic pseudo-random values in [0, 1) without pulling in an RNG.
pub fn spread(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 * 0.618_033_988_749_895) % 1.0).powi(2)).collect()
}
