use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::labeler::Matcher;
use super::taxonomy::IdentityId;
use crate::csvio;
use crate::error::{Error, Result};

const BUNDLED_FIXTURE: &str = include_str!("../../data/labeler_fixture.csv");
const FIXTURE_HEADER: [&str; 4] = ["pre_profile", "post_profile", "identity", "gold"];

/// One annotated profile change: does `post` disclose `identity` relative to `pre`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCase {
    pub pre_profile: String,
    pub post_profile: String,
    pub identity: IdentityId,
    pub gold: bool,
}

fn parse_gold(raw: &str, line: usize) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Parse {
            line,
            field: "gold".into(),
            message: format!("expected a boolean, found `{other}`"),
        }),
    }
}

pub fn read_fixture<R: Read>(input: R, name: &str) -> Result<Vec<FixtureCase>> {
    let mut rdr = csvio::reader(input, name, &FIXTURE_HEADER)?;
    let mut cases = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        cases.push(FixtureCase {
            pre_profile: rec.get(0).unwrap_or("").to_owned(),
            post_profile: rec.get(1).unwrap_or("").to_owned(),
            identity: csvio::parse_field(&rec, 2, "identity")?,
            gold: parse_gold(rec.get(3).unwrap_or(""), line)?,
        });
    }
    Ok(cases)
}

pub fn read_fixture_path(path: &Path) -> Result<Vec<FixtureCase>> {
    read_fixture(std::fs::File::open(path)?, &path.display().to_string())
}

/// Annotated pairs shipped with the crate: twenty per retained subcategory,
/// ten disclosures and ten non-disclosures (none, both, pre-only).
pub fn bundled_fixture() -> Vec<FixtureCase> {
    read_fixture(BUNDLED_FIXTURE.as_bytes(), "labeler_fixture.csv").expect("bundled fixture is valid")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Absent when the fixture has no positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        if self.tp + self.fn_ == 0 {
            return None;
        }
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl From<&Confusion> for Scores {
    fn from(c: &Confusion) -> Self {
        Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelerEvaluation {
    pub per_identity: BTreeMap<IdentityId, Confusion>,
    /// Macro averages over the identities of each category that have a defined value.
    pub per_category: BTreeMap<String, Scores>,
}

impl LabelerEvaluation {
    pub fn scores(&self, identity: &IdentityId) -> Option<Scores> {
        self.per_identity.get(identity).map(Scores::from)
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate_labeler(matcher: &Matcher, fixture: &[FixtureCase]) -> LabelerEvaluation {
    let mut per_identity: BTreeMap<IdentityId, Confusion> = BTreeMap::new();
    for case in fixture {
        let predicted = matcher.discloses(&case.pre_profile, &case.post_profile, &case.identity);
        per_identity
            .entry(case.identity.clone())
            .or_default()
            .record(predicted, case.gold);
    }
    let mut grouped: BTreeMap<String, Vec<Scores>> = BTreeMap::new();
    for (id, c) in &per_identity {
        grouped.entry(id.category.clone()).or_default().push(c.into());
    }
    let per_category = grouped
        .into_iter()
        .map(|(cat, s)| {
            let scores = Scores {
                precision: mean(s.iter().map(|x| x.precision)),
                recall: mean(s.iter().map(|x| x.recall)),
                f1: mean(s.iter().map(|x| x.f1)),
            };
            (cat, scores)
        })
        .collect();
    LabelerEvaluation {
        per_identity,
        per_category,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity_rules::Taxonomy;

    #[test]
    fn f1_from_counts() {
        let c = Confusion {
            tp: 10,
            fp: 0,
            fn_: 10,
            tn: 0,
        };
        assert_eq!(c.precision(), Some(1.0));
        assert_eq!(c.recall(), Some(0.5));
        assert!((c.f1().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_positives_leaves_recall_absent() {
        let c = Confusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 20,
        };
        assert_eq!(c.recall(), None);
        assert_eq!(c.f1(), None);
        assert_eq!(c.precision(), None);
    }

    #[test]
    fn perfect_predictions() {
        let m = crate::identity_rules::bundled_matcher();
        let id: IdentityId = "gender:women".parse().unwrap();
        let fixture: Vec<FixtureCase> = (0..20)
            .map(|i| FixtureCase {
                pre_profile: "runner".into(),
                post_profile: if i < 10 { "runner | she/her".into() } else { "runner | hiker".into() },
                identity: id.clone(),
                gold: i < 10,
            })
            .collect();
        let eval = evaluate_labeler(m, &fixture);
        assert_eq!(eval.scores(&id).unwrap().f1, Some(1.0));
        assert_eq!(eval.per_category["gender"].f1, Some(1.0));
    }

    #[test]
    fn bundled_fixture_shape() {
        let fixture = bundled_fixture();
        let retained = Taxonomy::bundled().retained_identities();
        for id in &retained {
            let rows: Vec<_> = fixture.iter().filter(|c| &c.identity == id).collect();
            assert!(rows.len() >= 20, "{id}");
            assert_eq!(rows.iter().filter(|c| c.gold).count(), 10, "{id}");
        }
        assert!(fixture.iter().all(|c| retained.contains(&c.identity)));
    }

    #[test]
    fn bad_gold_value() {
        let src = "pre_profile,post_profile,identity,gold\na,b,gender:men,maybe\n";
        assert!(matches!(read_fixture(src.as_bytes(), "f"), Err(Error::Parse { .. })));
    }
}
