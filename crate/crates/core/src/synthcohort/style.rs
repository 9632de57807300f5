use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::distances::{write_styles, write_topics, GroupInputs, StyleMatrix, TopicDistribution};
use crate::error::{Error, Result};

/// Topic and style inputs of a reference group and of one user group before
/// and after disclosure, built so that the users' style converges on the
/// reference while their topics stay put.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleFixture {
    pub reference: GroupInputs,
    pub pre: GroupInputs,
    pub post: GroupInputs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    pub items: usize,
    pub topics: usize,
    pub styles: usize,
    /// Offset of the user group along the reference's main style axis, in
    /// reference standard deviations, before and after.
    pub shift_pre: f64,
    pub shift_post: f64,
    /// Dirichlet concentration of item topic mixtures.
    pub concentration: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        Self {
            items: 400,
            topics: 10,
            styles: 6,
            shift_pre: 1.2,
            shift_post: 0.5,
            concentration: 20.0,
        }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, mean: &[f64], concentration: f64) -> Vec<f64> {
    let draws: Vec<f64> = mean
        .iter()
        .map(|m| Gamma::new(m * concentration, 1.0).expect("positive shape").sample(rng).max(1e-12))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draw the fixture. Reference and user groups share a topic mixture that
/// differs from the reference's, so topic distance is the same on both sides
/// of the change up to sampling noise.
pub fn style_fixture(seed: u64, p: StyleParams) -> Result<StyleFixture> {
    if p.items < 2 || p.topics < 2 || p.styles < 2 || !(p.concentration > 0.0) {
        return Err(Error::Config("style fixture needs at least two items, topics and styles".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = p.topics as f64;
    let reference_mix: Vec<f64> = (0..p.topics).map(|i| (1.0 + i as f64) / (k * (k + 1.0) / 2.0)).collect();
    let user_mix: Vec<f64> = (0..p.topics).map(|i| (k - i as f64) / (k * (k + 1.0) / 2.0)).collect();

    // One latent factor loads on every style dimension, so it is the
    // reference's principal axis; user groups are offset along it.
    let loading: Vec<f64> = (0..p.styles).map(|j| 0.6 + 0.1 * (j % 3) as f64).collect();
    let mut group = |mix: &[f64], shift: f64| -> Result<GroupInputs> {
        let topics = (0..p.items)
            .map(|_| TopicDistribution::new(dirichlet(&mut rng, mix, p.concentration)))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = (0..p.items)
            .map(|_| {
                let f: f64 = rng.sample::<f64, _>(StandardNormal) - shift;
                loading
                    .iter()
                    .map(|l| logistic(l * f + 0.3 * rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        Ok(GroupInputs {
            topics,
            styles: StyleMatrix::new(&rows)?,
        })
    };
    let reference = group(&reference_mix, 0.0)?;
    let pre = group(&user_mix, p.shift_pre)?;
    let post = group(&user_mix, p.shift_post)?;
    Ok(StyleFixture { reference, pre, post })
}

pub const STYLE_GROUPS: [&str; 3] = ["ap", "pre", "post"];
pub const TOPICS_FILE: &str = "topics.csv";
pub const STYLES_FILE: &str = "styles.csv";

/// Write `<dir>/{ap,pre,post}/{topics.csv,styles.csv}`.
pub fn write_style_fixture(dir: &Path, f: &StyleFixture) -> Result<()> {
    for (name, g) in STYLE_GROUPS.iter().zip([&f.reference, &f.pre, &f.post]) {
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub)?;
        write_topics(BufWriter::new(File::create(sub.join(TOPICS_FILE))?), &g.topics)?;
        write_styles(BufWriter::new(File::create(sub.join(STYLES_FILE))?), &g.styles)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{read_styles, read_topics, shift_report};

    #[test]
    fn style_converges_while_topics_stay() {
        let f = style_fixture(11, StyleParams::default()).unwrap();
        let r = shift_report(&f.reference, &f.pre, &f.post).unwrap();
        assert!(r.style_post.abs < r.style_pre.abs, "{r:?}");
        assert!(((r.topic_post - r.topic_pre) / r.topic_pre).abs() < 0.1, "{r:?}");
        assert!(r.topic_pre > 0.1);
    }

    #[test]
    fn files_round_trip() {
        let f = style_fixture(3, StyleParams { items: 20, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_style_fixture(dir.path(), &f).unwrap();
        let sub = dir.path().join("pre");
        let topics = read_topics(File::open(sub.join(TOPICS_FILE)).unwrap(), "topics").unwrap();
        let styles = read_styles(File::open(sub.join(STYLES_FILE)).unwrap(), "styles").unwrap();
        assert_eq!(topics.len(), 20);
        assert_eq!(styles.nrows(), 20);
        for (a, b) in topics.iter().zip(&f.pre.topics) {
            for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
                assert!((x - y).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(style_fixture(5, StyleParams::default()).unwrap(), style_fixture(5, StyleParams::default()).unwrap());
    }
}
