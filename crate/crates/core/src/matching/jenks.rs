//! Exact Fisher-Jenks natural breaks.
//!
//! The optimum is found by dynamic programming over the distinct sorted values
//! (weighted by multiplicity). Among optimal partitions the one with the
//! lexicographically smallest breakpoint vector is returned, so results are
//! reproducible even when several partitions tie.

use crate::error::{Error, Result};

/// Weighted prefix sums over distinct values, shifted by the overall mean.
struct Prefix {
    w: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(values: &[f64], counts: &[f64]) -> Self {
        let total: f64 = counts.iter().sum();
        let shift = values.iter().zip(counts).map(|(v, c)| v * c).sum::<f64>() / total;
        let m = values.len();
        let mut w = vec![0.0; m + 1];
        let mut s1 = vec![0.0; m + 1];
        let mut s2 = vec![0.0; m + 1];
        for i in 0..m {
            let v = values[i] - shift;
            w[i + 1] = w[i] + counts[i];
            s1[i + 1] = s1[i] + counts[i] * v;
            s2[i + 1] = s2[i] + counts[i] * v * v;
        }
        Self { w, s1, s2 }
    }

    /// Within-class sum of squares of distinct values `a..b` (exclusive end).
    fn cost(&self, a: usize, b: usize) -> f64 {
        let w = self.w[b] - self.w[a];
        let s1 = self.s1[b] - self.s1[a];
        let s2 = self.s2[b] - self.s2[a];
        (s2 - s1 * s1 / w).max(0.0)
    }
}

fn distinct(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("jenks: non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut vals: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for v in sorted {
        if vals.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            vals.push(v);
            counts.push(1.0);
        }
    }
    Ok((vals, counts))
}

/// Number of distinct values, the largest admissible class count.
pub fn distinct_count(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

/// `table[j][s]`: optimal cost of splitting distinct values `s..m` into `j + 1` classes.
/// Entries that are infeasible (fewer values than classes) are +inf.
fn suffix_table(pre: &Prefix, m: usize, k: usize, exhaustive: bool) -> Vec<Vec<f64>> {
    let mut table = vec![vec![f64::INFINITY; m + 1]; k];
    for s in 0..m {
        table[0][s] = pre.cost(s, m);
    }
    for j in 1..k {
        let (done, rest) = table.split_at_mut(j);
        let prev = &done[j - 1];
        let cur = &mut rest[0];
        // Classes j+1 over s..m need s <= m - (j + 1).
        let hi = m - j;
        if exhaustive {
            for s in 0..hi {
                let mut best = f64::INFINITY;
                for t in s + 1..=hi {
                    best = best.min(pre.cost(s, t) + prev[t]);
                }
                cur[s] = best;
            }
        } else {
            fill(pre, prev, cur, 0, hi, 1, hi);
        }
    }
    table
}

/// Divide and conquer over s in `lo..hi`; the optimal first cut t lies in
/// `tlo..=thi` and is non-decreasing in s.
fn fill(pre: &Prefix, prev: &[f64], cur: &mut [f64], lo: usize, hi: usize, tlo: usize, thi: usize) {
    if lo >= hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut arg = tlo.max(mid + 1);
    for t in tlo.max(mid + 1)..=thi {
        let c = pre.cost(mid, t) + prev[t];
        if c < best {
            best = c;
            arg = t;
        }
    }
    cur[mid] = best;
    fill(pre, prev, cur, lo, mid, tlo, arg);
    fill(pre, prev, cur, mid + 1, hi, arg, thi);
}

/// Indices (into the distinct values) where classes 2..=k start.
fn break_indices(values: &[f64], k: usize, exhaustive: bool) -> Result<(Vec<f64>, Vec<usize>)> {
    if values.is_empty() {
        return Err(Error::invalid("jenks: no values"));
    }
    let (vals, counts) = distinct(values)?;
    let m = vals.len();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("jenks: k = {k} outside 1..={m} (distinct values)")));
    }
    let pre = Prefix::new(&vals, &counts);
    let table = suffix_table(&pre, m, k, exhaustive);
    let opt = table[k - 1][0];
    let tol = 1e-9 * (1.0 + pre.cost(0, m));
    let mut starts = Vec::with_capacity(k - 1);
    let mut spent = 0.0;
    let mut s = 0;
    for classes_left in (1..k).rev() {
        // Smallest end of the current class that still admits an optimal completion.
        let mut chosen = None;
        for t in s + 1..=m - classes_left {
            let c = pre.cost(s, t);
            if spent + c + table[classes_left - 1][t] <= opt + tol {
                chosen = Some((t, c));
                break;
            }
        }
        let (t, c) = chosen.expect("an optimal completion always exists");
        spent += c;
        starts.push(t);
        s = t;
    }
    Ok((vals, starts))
}

/// Natural-break boundaries: the smallest value of each class after the first,
/// so class `j` covers `[b_{j-1}, b_j)`.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let (vals, starts) = break_indices(values, k, false)?;
    Ok(starts.into_iter().map(|i| vals[i]).collect())
}

/// Same result computed with the plain cubic recurrence; used to cross-check
/// the divide-and-conquer path.
pub fn jenks_breaks_exhaustive_dp(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let (vals, starts) = break_indices(values, k, true)?;
    Ok(starts.into_iter().map(|i| vals[i]).collect())
}

/// Class index of `v` given breakpoints: the number of breakpoints `<= v`.
pub fn class_of(breaks: &[f64], v: f64) -> usize {
    breaks.partition_point(|b| *b <= v)
}

/// Total within-class sum of squares of `values` under `breaks`.
pub fn goodness(values: &[f64], breaks: &[f64]) -> f64 {
    let mut classes = vec![Vec::new(); breaks.len() + 1];
    for v in values {
        classes[class_of(breaks, *v)].push(*v);
    }
    classes
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_clusters() {
        assert_eq!(jenks_breaks(&[1.0, 2.0, 3.0, 10.0, 11.0, 12.0], 2).unwrap(), vec![10.0]);
    }

    #[test]
    fn three_clusters() {
        let v = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 100.0, 101.0];
        assert_eq!(jenks_breaks(&v, 3).unwrap(), vec![10.0, 100.0]);
    }

    #[test]
    fn single_class() {
        assert!(jenks_breaks(&[3.0, 1.0, 2.0], 1).unwrap().is_empty());
    }

    #[test]
    fn too_many_classes() {
        assert!(jenks_breaks(&[1.0, 1.0, 2.0], 3).is_err());
        assert!(jenks_breaks(&[], 1).is_err());
        assert!(jenks_breaks(&[1.0], 0).is_err());
    }

    #[test]
    fn every_value_its_own_class() {
        assert_eq!(jenks_breaks(&[4.0, 1.0, 9.0], 3).unwrap(), vec![4.0, 9.0]);
    }

    #[test]
    fn ties_prefer_smallest_breakpoints() {
        // {0},{1,2} and {0,1},{2} are equally good; the first has the smaller break.
        assert_eq!(jenks_breaks(&[0.0, 1.0, 2.0], 2).unwrap(), vec![1.0]);
    }

    #[test]
    fn multiplicity_counts() {
        // Many copies of 0 pull the break toward the singleton.
        let mut v = vec![0.0; 20];
        v.extend([5.0, 6.0, 20.0]);
        assert_eq!(jenks_breaks(&v, 2).unwrap(), vec![20.0]);
        assert_eq!(jenks_breaks(&v, 3).unwrap(), vec![5.0, 20.0]);
    }

    proptest! {
        #[test]
        fn divide_and_conquer_matches_cubic(values in prop::collection::vec(0u32..400, 5..120), k in 1usize..9) {
            let values: Vec<f64> = values.into_iter().map(|v| v as f64 / 7.0).collect();
            let k = k.min(distinct_count(&values));
            prop_assert_eq!(jenks_breaks(&values, k).unwrap(), jenks_breaks_exhaustive_dp(&values, k).unwrap());
        }

        #[test]
        fn breaks_are_sorted_members(values in prop::collection::vec(-50i32..50, 1..40), k in 1usize..6) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let k = k.min(distinct_count(&values));
            let b = jenks_breaks(&values, k).unwrap();
            prop_assert_eq!(b.len(), k - 1);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(b.iter().all(|x| values.contains(x)));
        }
    }
}
