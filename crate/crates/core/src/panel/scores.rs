use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::csvio;
use crate::error::{Error, Result};

pub const OFFENSIVE: &str = "offensive";
pub const SCORE_HEADER: [&str; 3] = ["event_id", "score_name", "value"];

/// Classifier outputs per event. Absence means "unscored", never zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: HashMap<String, BTreeMap<String, f64>>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, event_id: impl Into<String>, name: impl Into<String>, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("score {value} outside [0, 1]")));
        }
        self.scores.entry(event_id.into()).or_default().insert(name.into(), value);
        Ok(())
    }

    pub fn get(&self, event_id: &str, name: &str) -> Option<f64> {
        self.scores.get(event_id)?.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// All entries sorted by (event_id, score_name).
    pub fn entries(&self) -> Vec<(&str, &str, f64)> {
        let mut out: Vec<(&str, &str, f64)> = self
            .scores
            .iter()
            .flat_map(|(e, m)| m.iter().map(move |(n, v)| (e.as_str(), n.as_str(), *v)))
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }
}

pub fn read_scores<R: Read>(input: R, name: &str) -> Result<ScoreTable> {
    let mut rdr = csvio::reader(input, name, &SCORE_HEADER)?;
    let mut table = ScoreTable::new();
    for rec in rdr.records() {
        let rec = rec?;
        let value: f64 = csvio::parse_field(&rec, 2, "value")?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Parse {
                line: rec.position().map_or(0, |p| p.line() as usize),
                field: "value".into(),
                message: format!("score {value} outside [0, 1]"),
            });
        }
        table.insert(rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""), value)?;
    }
    Ok(table)
}

pub fn write_scores<W: Write>(out: W, table: &ScoreTable) -> Result<()> {
    let mut w = csvio::writer(out, &SCORE_HEADER)?;
    for (e, n, v) in table.entries() {
        w.write_record([e, n, &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
