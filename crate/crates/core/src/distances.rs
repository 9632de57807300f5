//! Topic and style comparison statistics: Jensen-Shannon distance, a
//! principal-axis projection with Cohen's d, and Spearman rank correlation.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution(Vec<f64>);

impl TopicDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("empty topic distribution"));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("topic probabilities must be finite and non-negative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("topic distribution sums to {s}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Items by style scores, every entry in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StyleMatrix(DMatrix<f64>);

impl StyleMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("empty style matrix"));
        };
        let d = first.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("style rows must share a positive width"));
        }
        if rows.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("style scores must lie in [0, 1]"));
        }
        Ok(Self(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimension mismatch: {a} vs {b}")))
    }
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log2())
        .sum()
}

/// Square root of the base-2 Jensen-Shannon divergence.
pub fn js_distance(p: &TopicDistribution, q: &TopicDistribution) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let m: Vec<f64> = p.0.iter().zip(&q.0).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl2(&p.0, &m) + 0.5 * kl2(&q.0, &m);
    Ok(js.clamp(0.0, 1.0).sqrt())
}

/// Average of a group's item distributions.
pub fn mean_pool(items: &[TopicDistribution]) -> Result<TopicDistribution> {
    let Some(first) = items.first() else {
        return Err(Error::invalid("no topic distributions to pool"));
    };
    let mut acc = vec![0.0; first.dim()];
    for t in items {
        check_dims(first.dim(), t.dim())?;
        for (a, v) in acc.iter_mut().zip(&t.0) {
            *a += v;
        }
    }
    let n = items.len() as f64;
    let mut pooled: Vec<f64> = acc.into_iter().map(|a| a / n).collect();
    let s: f64 = pooled.iter().sum();
    pooled.iter_mut().for_each(|v| *v /= s);
    TopicDistribution::new(pooled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaAxis {
    pub axis: Vec<f64>,
    pub means: Vec<f64>,
    /// Variance along the axis (n-1 divisor).
    pub variance: f64,
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|j| m.column(j).mean()).collect()
}

fn covariance(m: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    let n = m.nrows();
    let centered = DMatrix::from_fn(n, m.ncols(), |i, j| m[(i, j)] - means[j]);
    centered.transpose() * &centered / (n as f64 - 1.0)
}

/// First principal axis of the centered matrix. The sign makes the
/// largest-magnitude component positive (the first such one on ties).
pub fn fit_pca_axis(m: &StyleMatrix) -> Result<PcaAxis> {
    if m.nrows() < 2 {
        return Err(Error::invalid("principal axis needs at least two rows"));
    }
    let means = column_means(&m.0);
    let cov = covariance(&m.0, &means);
    if cov.trace() <= 0.0 {
        return Err(Error::invalid("style matrix has zero variance"));
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let mut axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lead = axis
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if v.abs() > axis[best].abs() + 1e-12 { i } else { best });
    let sign = if axis[lead] < 0.0 { -1.0 } else { 1.0 };
    axis.iter_mut().for_each(|v| *v *= sign / norm);
    Ok(PcaAxis {
        axis,
        means,
        variance: eig.eigenvalues[top],
    })
}

/// Centered projections of every row onto `axis`.
pub fn project(axis: &PcaAxis, m: &StyleMatrix) -> Result<Vec<f64>> {
    check_dims(axis.axis.len(), m.ncols())?;
    check_dims(axis.means.len(), m.ncols())?;
    Ok(m.0
        .row_iter()
        .map(|r| r.iter().zip(&axis.means).zip(&axis.axis).map(|((x, mu), a)| (x - mu) * a).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohensD {
    pub signed: f64,
    pub abs: f64,
    /// Pooled sd was zero while the means differ; `signed` is then infinite.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<CohensD> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Cohen's d needs at least two values per group"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    let diff = ma - mb;
    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            CohensD {
                signed: 0.0,
                abs: 0.0,
                degenerate: false,
            }
        } else {
            CohensD {
                signed: f64::INFINITY.copysign(diff),
                abs: f64::INFINITY,
                degenerate: true,
            }
        });
    }
    let d = diff / pooled;
    Ok(CohensD {
        signed: d,
        abs: d.abs(),
        degenerate: false,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0);
    Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_dims(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::invalid("Spearman correlation needs at least two pairs"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// One group's inputs to the shift comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupInputs {
    pub topics: Vec<TopicDistribution>,
    pub styles: StyleMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftReport {
    pub topic_pre: f64,
    pub topic_post: f64,
    pub style_pre: CohensD,
    pub style_post: CohensD,
}

/// Distances of the pre and post groups from the reference group. Styles are
/// projected on the reference group's principal axis.
pub fn shift_report(reference: &GroupInputs, pre: &GroupInputs, post: &GroupInputs) -> Result<ShiftReport> {
    let ap = mean_pool(&reference.topics)?;
    let topic_pre = js_distance(&mean_pool(&pre.topics)?, &ap)?;
    let topic_post = js_distance(&mean_pool(&post.topics)?, &ap)?;
    let axis = fit_pca_axis(&reference.styles)?;
    let ap_proj = project(&axis, &reference.styles)?;
    let style_pre = cohens_d(&project(&axis, &pre.styles)?, &ap_proj)?;
    let style_post = cohens_d(&project(&axis, &post.styles)?, &ap_proj)?;
    Ok(ShiftReport {
        topic_pre,
        topic_post,
        style_pre,
        style_post,
    })
}

fn read_rows<R: Read>(input: R, name: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: rec.position().map_or(i + 1, |p| p.line() as usize),
                    field: format!("{name} column {}", j + 1),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// One distribution per line, comma separated; `#` starts a comment line.
pub fn read_topics<R: Read>(input: R, name: &str) -> Result<Vec<TopicDistribution>> {
    read_rows(input, name)?
        .into_iter()
        .map(TopicDistribution::new)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::invalid(format!("{name}: {e}")))
}

pub fn read_styles<R: Read>(input: R, name: &str) -> Result<StyleMatrix> {
    StyleMatrix::new(&read_rows(input, name)?).map_err(|e| Error::invalid(format!("{name}: {e}")))
}

fn write_rows<'a, W: Write>(out: W, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:.12}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_topics<W: Write>(out: W, topics: &[TopicDistribution]) -> Result<()> {
    write_rows(out, topics.iter().map(|t| t.probabilities()))
}

pub fn write_styles<W: Write>(out: W, m: &StyleMatrix) -> Result<()> {
    let rows: Vec<Vec<f64>> = m.0.row_iter().map(|r| r.iter().copied().collect()).collect();
    write_rows(out, rows.iter().map(Vec::as_slice))
}

pub const SHIFT_HEADER: [&str; 5] = ["measure", "d_pre", "d_post", "signed_pre", "signed_post"];

pub fn write_shift<W: Write>(out: W, r: &ShiftReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SHIFT_HEADER)?;
    let f = |v: f64| format!("{v:.10}");
    w.write_record(["topic".into(), f(r.topic_pre), f(r.topic_post), String::new(), String::new()])?;
    w.write_record([
        "style".into(),
        f(r.style_pre.abs),
        f(r.style_post.abs),
        f(r.style_pre.signed),
        f(r.style_post.signed),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn td(p: &[f64]) -> TopicDistribution {
        TopicDistribution::new(p.to_vec()).unwrap()
    }

    fn sm(rows: &[&[f64]]) -> StyleMatrix {
        StyleMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> StyleMatrix {
        // Correlated columns so the top eigenvalue is well separated.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(0.0..1.0);
                (0..d)
                    .map(|j| (0.2 + 0.6 * z * (j as f64 + 1.0) / d as f64 + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        StyleMatrix::new(&rows).unwrap()
    }

    /// Power iteration on the covariance, the oracle for the eigen solver.
    fn power_axis(m: &StyleMatrix) -> Vec<f64> {
        let means = column_means(&m.0);
        let cov = covariance(&m.0, &means);
        let mut v = nalgebra::DVector::from_element(m.ncols(), 1.0);
        for _ in 0..10_000 {
            let next = &cov * &v;
            let next = &next / next.norm();
            if (&next - &v).norm() < 1e-15 {
                v = next;
                break;
            }
            v = next;
        }
        v.iter().copied().collect()
    }

    #[test]
    fn js_examples() {
        assert_eq!(js_distance(&td(&[0.3, 0.7]), &td(&[0.3, 0.7])).unwrap(), 0.0);
        assert!((js_distance(&td(&[1.0, 0.0]), &td(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-12);
        // Mixture [0.75, 0.25]: KL(p||m) = 0.5 log2(2/3) + 0.5 log2 2, KL(q||m) = log2(4/3).
        let want = (0.5 * (0.5 * (2.0f64 / 3.0).log2() + 0.5) + 0.5 * (4.0f64 / 3.0).log2()).sqrt();
        let got = js_distance(&td(&[0.5, 0.5]), &td(&[1.0, 0.0])).unwrap();
        assert!((got - want).abs() < 1e-12 && (got - 0.5579).abs() < 1e-4, "{got}");
        assert!(js_distance(&td(&[1.0]), &td(&[0.5, 0.5])).is_err());
        assert!(TopicDistribution::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn pca_examples() {
        let one = sm(&[&[0.1], &[0.5], &[0.9]]);
        assert_eq!(fit_pca_axis(&one).unwrap().axis, vec![1.0]);
        let diag = sm(&[&[0.1, 0.1], &[0.4, 0.4], &[0.8, 0.8]]);
        let a = fit_pca_axis(&diag).unwrap().axis;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - h).abs() < 1e-12 && (a[1] - h).abs() < 1e-12, "{a:?}");
        assert!(fit_pca_axis(&sm(&[&[0.2, 0.3], &[0.2, 0.3]])).is_err());
    }

    #[test]
    fn pca_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 60, 5);
            let got = fit_pca_axis(&m).unwrap();
            let oracle = power_axis(&m);
            let sign = if got.axis.iter().zip(&oracle).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in got.axis.iter().zip(&oracle) {
                assert!((a - sign * b).abs() < 1e-8, "{:?} vs {oracle:?}", got.axis);
            }
            let proj = project(&got, &m).unwrap();
            let (mean, var) = mean_var(&proj);
            assert!(mean.abs() < 1e-12);
            assert!((var - got.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_examples() {
        let axis = PcaAxis {
            axis: vec![1.0, 0.0],
            means: vec![0.0, 0.0],
            variance: 1.0,
        };
        assert_eq!(project(&axis, &sm(&[&[0.3, 0.7]])).unwrap(), vec![0.3]);
        let same = sm(&[&[0.4, 0.2], &[0.4, 0.2], &[0.4, 0.2]]);
        let centered = PcaAxis {
            axis: vec![0.6, 0.8],
            means: column_means(same.matrix()),
            variance: 0.0,
        };
        assert!(project(&centered, &same).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(project(&centered, &one_col()).is_err());
    }

    fn one_col() -> StyleMatrix {
        sm(&[&[0.5]])
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d(&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]).unwrap();
        assert!((d.abs - 2.0).abs() < 1e-12 && d.signed < 0.0);
        assert_eq!(cohens_d(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs, 0.0);
        let scaled = cohens_d(&[10.0, 20.0, 30.0], &[30.0, 40.0, 50.0]).unwrap();
        assert!((scaled.signed - d.signed).abs() < 1e-12);
        assert_eq!(cohens_d(&[2.0, 2.0], &[2.0, 2.0]).unwrap().signed, 0.0);
        let flat = cohens_d(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(flat.degenerate && flat.signed == f64::NEG_INFINITY);
        assert!(cohens_d(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &x).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[9.0, 5.0, 2.0, 0.0]).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 4]).unwrap(), None);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn identical_groups_give_zero_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GroupInputs {
            topics: vec![td(&[0.2, 0.3, 0.5]), td(&[0.6, 0.2, 0.2])],
            styles: random_matrix(&mut rng, 30, 5),
        };
        let r = shift_report(&g, &g, &g).unwrap();
        assert_eq!((r.topic_pre, r.topic_post, r.style_pre.abs, r.style_post.abs), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn io_round_trip() {
        let topics = vec![td(&[0.25, 0.75]), td(&[1.0, 0.0])];
        let mut buf = Vec::new();
        write_topics(&mut buf, &topics).unwrap();
        assert_eq!(read_topics(buf.as_slice(), "t").unwrap(), topics);
        let styles = sm(&[&[0.1, 0.2], &[0.3, 0.4]]);
        let mut buf = Vec::new();
        write_styles(&mut buf, &styles).unwrap();
        assert_eq!(read_styles(buf.as_slice(), "s").unwrap(), styles);
        assert!(read_styles("0.1,2.0\n".as_bytes(), "s").is_err());
        assert!(read_topics("# note\n0.5,x\n".as_bytes(), "t").is_err());
    }

    fn simplex(dim: usize) -> impl Strategy<Value = TopicDistribution> {
        prop::collection::vec(0.0f64..1.0, dim).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| {
                let mut p: Vec<f64> = v.iter().map(|x| x / s).collect();
                let r: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= r);
                TopicDistribution(p)
            })
        })
    }

    proptest! {
        #[test]
        fn js_is_a_metric(p in simplex(6), q in simplex(6), r in simplex(6)) {
            let pq = js_distance(&p, &q).unwrap();
            prop_assert!((pq - js_distance(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(pq <= js_distance(&p, &r).unwrap() + js_distance(&r, &q).unwrap() + 1e-9);
            prop_assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn pca_axis_maximizes_variance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, 40, 5);
            let fit = fit_pca_axis(&m).unwrap();
            prop_assert!((fit.axis.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
            let best = mean_var(&project(&fit, &m).unwrap()).1;
            for _ in 0..200 {
                let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let other = PcaAxis { axis: v.iter().map(|x| x / n).collect(), means: fit.means.clone(), variance: 0.0 };
                prop_assert!(mean_var(&project(&other, &m).unwrap()).1 <= best + 1e-12);
            }
        }

        #[test]
        fn cohens_d_symmetry(a in prop::collection::vec(-5.0f64..5.0, 2..10),
                             b in prop::collection::vec(-5.0f64..5.0, 2..10),
                             scale in 0.1f64..10.0, shift in -10.0f64..10.0) {
            let d = cohens_d(&a, &b).unwrap();
            prop_assume!(!d.degenerate && d.abs > 1e-9);
            prop_assert!((cohens_d(&b, &a).unwrap().signed + d.signed).abs() < 1e-9);
            let t = |x: &Vec<f64>| x.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
            prop_assert!((cohens_d(&t(&a), &t(&b)).unwrap().signed - d.signed).abs() < 1e-6 * d.abs.max(1.0));
        }

        #[test]
        fn spearman_monotone_invariant(x in prop::collection::vec(-100.0f64..100.0, 2..15),
                                       y in prop::collection::vec(-100.0f64..100.0, 15)) {
            let y = &y[..x.len()];
            let base = spearman(&x, y).unwrap();
            let fx: Vec<f64> = x.iter().map(|v| (v / 50.0).exp() + v.powi(3)).collect();
            let fy: Vec<f64> = y.iter().map(|v| -v).collect();
            let got = spearman(&fx, &fy).unwrap();
            match (base, got) {
                (Some(b), Some(g)) => prop_assert!((b + g).abs() < 1e-12),
                (b, g) => prop_assert_eq!(b.is_none(), g.is_none()),
            }
        }
    }
}
