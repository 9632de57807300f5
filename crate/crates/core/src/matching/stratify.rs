use std::collections::BTreeMap;

use rayon::prelude::*;

use super::jenks::{class_of, distinct_count, jenks_breaks};
use crate::error::Result;

pub const MAX_CONTROLS: usize = 5;

/// A user entering the matcher: propensity score, week bucket of the profile
/// change, and standardized covariates for the distance computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub user_id: String,
    pub score: f64,
    pub week: i64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub index: usize,
    /// Half-open score interval `[lo, hi)`; the last stratum also holds `hi`.
    pub lo: f64,
    pub hi: f64,
    pub treated_members: Vec<String>,
    pub control_members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub treated_id: String,
    pub control_ids: Vec<String>,
    pub stratum_index: usize,
    pub week: i64,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub strata: Vec<Stratum>,
    /// Sorted by treated id.
    pub matches: Vec<MatchSet>,
    /// Treated users with no same-stratum, same-week control.
    pub unmatched: Vec<String>,
}

impl MatchOutcome {
    /// How many treated users each matched control serves.
    pub fn reuse_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for m in &self.matches {
            for c in &m.control_ids {
                *counts.entry(c.as_str()).or_default() += 1;
            }
        }
        counts
    }

    /// Matching weight of each control: the sum of `1 / k` over the match
    /// sets of size `k` that contain it.
    pub fn control_weights(&self) -> BTreeMap<&str, f64> {
        let mut weights = BTreeMap::new();
        for m in &self.matches {
            for c in &m.control_ids {
                *weights.entry(c.as_str()).or_insert(0.0) += 1.0 / m.control_ids.len() as f64;
            }
        }
        weights
    }

    pub fn unique_controls(&self) -> Vec<&str> {
        self.reuse_counts().into_keys().collect()
    }

    /// Controls used by more than one treated user.
    pub fn reused_controls(&self) -> usize {
        self.reuse_counts().values().filter(|c| **c > 1).count()
    }
}

/// Number of strata for a treated group of size `n`: floor(sqrt(n)), at least 1.
pub fn n_strata(n_treated: usize) -> usize {
    ((n_treated as f64).sqrt().floor() as usize).max(1)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Up to `MAX_CONTROLS` nearest candidates, ties broken by user id.
pub fn nearest<'a>(treated: &Unit, candidates: impl Iterator<Item = &'a Unit>) -> Vec<(f64, &'a str)> {
    let mut scored: Vec<(f64, &str)> = candidates
        .map(|c| (euclidean(&treated.z, &c.z), c.user_id.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(MAX_CONTROLS);
    scored
}

/// Stratify all users by Jenks breaks of their scores, then match each treated
/// user to the nearest controls of its own stratum and week. Controls may serve
/// several treated users.
pub fn stratify_and_match(treated: &[Unit], controls: &[Unit]) -> Result<MatchOutcome> {
    if treated.is_empty() {
        return Ok(MatchOutcome::default());
    }
    let all: Vec<f64> = treated.iter().chain(controls).map(|u| u.score).collect();
    let k = n_strata(treated.len()).min(distinct_count(&all));
    let breaks = jenks_breaks(&all, k)?;

    let mut strata: Vec<Stratum> = (0..k)
        .map(|i| Stratum {
            index: i,
            lo: if i == 0 { 0.0 } else { breaks[i - 1] },
            hi: if i == k - 1 { 1.0 } else { breaks[i] },
            treated_members: Vec::new(),
            control_members: Vec::new(),
        })
        .collect();

    let mut pools: BTreeMap<(usize, i64), Vec<&Unit>> = BTreeMap::new();
    for c in controls {
        let s = class_of(&breaks, c.score);
        strata[s].control_members.push(c.user_id.clone());
        pools.entry((s, c.week)).or_default().push(c);
    }
    let mut order: Vec<&Unit> = treated.iter().collect();
    order.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    for t in &order {
        strata[class_of(&breaks, t.score)].treated_members.push(t.user_id.clone());
    }
    for s in &mut strata {
        s.treated_members.sort();
        s.control_members.sort();
    }

    let results: Vec<std::result::Result<MatchSet, String>> = order
        .par_iter()
        .map(|t| {
            let s = class_of(&breaks, t.score);
            let pool = pools.get(&(s, t.week)).map_or(&[][..], Vec::as_slice);
            let best = nearest(t, pool.iter().copied());
            if best.is_empty() {
                Err(t.user_id.clone())
            } else {
                Ok(MatchSet {
                    treated_id: t.user_id.clone(),
                    control_ids: best.iter().map(|(_, id)| id.to_string()).collect(),
                    stratum_index: s,
                    week: t.week,
                    distances: best.iter().map(|(d, _)| *d).collect(),
                })
            }
        })
        .collect();

    let mut outcome = MatchOutcome {
        strata,
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(m) => outcome.matches.push(m),
            Err(id) => outcome.unmatched.push(id),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(id: &str, score: f64, week: i64, z: &[f64]) -> Unit {
        Unit {
            user_id: id.into(),
            score,
            week,
            z: z.to_vec(),
        }
    }

    #[test]
    fn strata_count() {
        assert_eq!(n_strata(4), 2);
        assert_eq!(n_strata(0), 1);
        assert_eq!(n_strata(1), 1);
        assert_eq!(n_strata(99), 9);
    }

    #[test]
    fn single_candidate() {
        let t = [unit("t", 0.5, 1, &[0.0])];
        let c = [unit("c", 0.5, 1, &[1.0]), unit("d", 0.5, 2, &[0.0])];
        let out = stratify_and_match(&t, &c).unwrap();
        assert_eq!(out.matches.len(), 1);
        assert_eq!(out.matches[0].control_ids, vec!["c"]);
        assert_eq!(out.matches[0].distances, vec![1.0]);
    }

    #[test]
    fn no_candidate_is_unmatched() {
        let t = [unit("t", 0.5, 1, &[0.0])];
        let c = [unit("c", 0.5, 2, &[0.0])];
        let out = stratify_and_match(&t, &c).unwrap();
        assert!(out.matches.is_empty());
        assert_eq!(out.unmatched, vec!["t"]);
    }

    #[test]
    fn ties_broken_by_id_and_capped() {
        let t = [unit("t", 0.5, 1, &[0.0])];
        let c: Vec<Unit> = ["g", "b", "f", "a", "e", "c", "d"]
            .iter()
            .map(|id| unit(id, 0.5, 1, &[1.0]))
            .collect();
        let out = stratify_and_match(&t, &c).unwrap();
        assert_eq!(out.matches[0].control_ids, vec!["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn controls_are_reused() {
        let t = [unit("t1", 0.5, 1, &[0.0]), unit("t2", 0.5, 1, &[0.1])];
        let c = [unit("c", 0.5, 1, &[0.0])];
        let out = stratify_and_match(&t, &c).unwrap();
        assert_eq!(out.reuse_counts()["c"], 2);
        assert_eq!(out.reused_controls(), 1);
    }

    /// Brute force: for each treated user scan every control and keep those
    /// in the same class and week.
    #[test]
    fn matches_brute_force_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _round in 0..20 {
            let mk = |rng: &mut ChaCha8Rng, prefix: &str, i: usize| {
                unit(
                    &format!("{prefix}{i:02}"),
                    (rng.random_range(1..40) as f64) / 41.0,
                    rng.random_range(0..3),
                    &[rng.random::<f64>(), rng.random::<f64>(), rng.random_range(0..3) as f64],
                )
            };
            let treated: Vec<Unit> = (0..10).map(|i| mk(&mut rng, "t", i)).collect();
            let controls: Vec<Unit> = (0..50).map(|i| mk(&mut rng, "c", i)).collect();
            let out = stratify_and_match(&treated, &controls).unwrap();

            let all: Vec<f64> = treated.iter().chain(&controls).map(|u| u.score).collect();
            let breaks = jenks_breaks(&all, 3).unwrap();
            let mut expected_unmatched = Vec::new();
            let mut expected = Vec::new();
            let mut sorted = treated.clone();
            sorted.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            for t in &sorted {
                let mut cands: Vec<(f64, String)> = Vec::new();
                for c in &controls {
                    if class_of(&breaks, c.score) == class_of(&breaks, t.score) && c.week == t.week {
                        cands.push((euclidean(&t.z, &c.z), c.user_id.clone()));
                    }
                }
                cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                cands.truncate(5);
                if cands.is_empty() {
                    expected_unmatched.push(t.user_id.clone());
                } else {
                    expected.push((t.user_id.clone(), cands.into_iter().map(|c| c.1).collect::<Vec<_>>()));
                }
            }
            let got: Vec<(String, Vec<String>)> =
                out.matches.iter().map(|m| (m.treated_id.clone(), m.control_ids.clone())).collect();
            assert_eq!(got, expected);
            assert_eq!(out.unmatched, expected_unmatched);
            for m in &out.matches {
                assert!(m.distances.windows(2).all(|d| d[0] <= d[1]));
                let t = treated.iter().find(|t| t.user_id == m.treated_id).unwrap();
                for cid in &m.control_ids {
                    let c = controls.iter().find(|c| &c.user_id == cid).unwrap();
                    assert_eq!(c.week, t.week);
                    assert_eq!(class_of(&breaks, c.score), m.stratum_index);
                }
            }
        }
    }

    #[test]
    fn strata_partition_unit_interval() {
        let t: Vec<Unit> = (0..9).map(|i| unit(&format!("t{i}"), 0.1 * i as f64 + 0.05, 0, &[0.0])).collect();
        let out = stratify_and_match(&t, &[]).unwrap();
        assert_eq!(out.strata.len(), 3);
        assert_eq!(out.strata[0].lo, 0.0);
        assert_eq!(out.strata.last().unwrap().hi, 1.0);
        assert!(out.strata.windows(2).all(|w| w[0].hi == w[1].lo));
        assert_eq!(out.unmatched.len(), 9);
    }
}
