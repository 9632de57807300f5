use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Intercept,
    LogFriends,
    LogFollowers,
    LogPosts,
    Treat,
    Post,
    TreatPost,
    LogNid,
    LogNidTreatPost,
}

impl Term {
    pub const ALL: [Term; 9] = [
        Term::Intercept,
        Term::LogFriends,
        Term::LogFollowers,
        Term::LogPosts,
        Term::Treat,
        Term::Post,
        Term::TreatPost,
        Term::LogNid,
        Term::LogNidTreatPost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Term::Intercept => "intercept",
            Term::LogFriends => "log1p_friends",
            Term::LogFollowers => "log1p_followers",
            Term::LogPosts => "log1p_posts",
            Term::Treat => "treat",
            Term::Post => "post",
            Term::TreatPost => "treat_post",
            Term::LogNid => "log1p_n_id",
            Term::LogNidTreatPost => "log1p_n_id_treat_post",
        }
    }

    fn value(self, o: &PanelObservation) -> f64 {
        let t = f64::from(u8::from(o.treated));
        let p = f64::from(u8::from(o.post));
        let nid = || (o.n_id.unwrap_or(0) as f64).ln_1p();
        match self {
            Term::Intercept => 1.0,
            Term::LogFriends => o.controls.n_friends.ln_1p(),
            Term::LogFollowers => o.controls.n_followers.ln_1p(),
            Term::LogPosts => o.controls.n_posts_total.ln_1p(),
            Term::Treat => t,
            Term::Post => p,
            Term::TreatPost => t * p,
            Term::LogNid => nid(),
            Term::LogNidTreatPost => nid() * t * p,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown term `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    NegativeBinomial,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    /// Add log(exposure) as a fixed offset.
    pub offset: bool,
    pub family: Family,
}

impl ModelSpec {
    /// Difference-in-differences with the three log-transformed controls.
    pub fn did() -> Self {
        Self {
            terms: vec![
                Term::Intercept,
                Term::LogFriends,
                Term::LogFollowers,
                Term::LogPosts,
                Term::Treat,
                Term::Post,
                Term::TreatPost,
            ],
            offset: false,
            family: Family::NegativeBinomial,
        }
    }

    /// Two-by-two difference-in-differences without controls.
    pub fn saturated() -> Self {
        Self {
            terms: vec![Term::Intercept, Term::Treat, Term::Post, Term::TreatPost],
            offset: false,
            family: Family::NegativeBinomial,
        }
    }

    /// `did` plus the identity-tweet main effect and its interaction.
    pub fn did_nid() -> Self {
        let mut s = Self::did();
        s.terms.extend([Term::LogNid, Term::LogNidTreatPost]);
        s
    }

    pub fn with_offset(mut self, offset: bool) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "did" => Ok(Self::did()),
            "did_nid" => Ok(Self::did_nid()),
            "saturated" => Ok(Self::saturated()),
            other => Err(Error::Config(format!("unknown model spec `{other}` (expected did, did_nid or saturated)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.terms.contains(&Term::Intercept) {
            return Err(Error::Config("model spec must include the intercept".into()));
        }
        if self.terms.contains(&Term::LogNidTreatPost) && !self.terms.contains(&Term::LogNid) {
            return Err(Error::Config("log1p_n_id_treat_post requires log1p_n_id".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::Config(format!("term {t} listed twice")));
            }
        }
        Ok(())
    }

    pub fn has(&self, term: Term) -> bool {
        self.terms.contains(&term)
    }
}

/// Numeric form of a panel under a spec.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub offset: DVector<f64>,
    /// Observation weights (matching weights of controls).
    pub weight: DVector<f64>,
    /// Cluster index per row, clusters numbered in user-id order.
    pub cluster: Vec<usize>,
    pub n_clusters: usize,
    pub terms: Vec<Term>,
    /// Rows dropped because their exposure was zero.
    pub dropped: usize,
}

pub fn build_design(panel: &[PanelObservation], spec: &ModelSpec) -> Result<Design> {
    spec.validate()?;
    let needs_nid = spec.has(Term::LogNid);
    let mut rows: Vec<&PanelObservation> = Vec::with_capacity(panel.len());
    let mut dropped = 0;
    for o in panel {
        if needs_nid && o.n_id.is_none() {
            return Err(Error::invalid(format!("row of `{}` has no n_id but the model uses it", o.user_id)));
        }
        if spec.offset {
            match o.exposure {
                None => {
                    return Err(Error::invalid(format!(
                        "row of `{}` has no exposure but the model uses an offset",
                        o.user_id
                    )))
                }
                Some(0) => {
                    dropped += 1;
                    continue;
                }
                Some(_) => {}
            }
        }
        rows.push(o);
    }
    let mut cells = [0usize; 4];
    for o in &rows {
        cells[usize::from(o.treated) * 2 + usize::from(o.post)] += 1;
    }
    if cells.contains(&0) {
        return Err(Error::invalid(format!(
            "degenerate panel: treatment x period cell sizes {cells:?} must all be positive"
        )));
    }
    let n = rows.len();
    let p = spec.terms.len();
    let x = DMatrix::from_fn(n, p, |i, j| spec.terms[j].value(rows[i]));
    let y = DVector::from_iterator(n, rows.iter().map(|o| o.y as f64));
    let offset = DVector::from_iterator(
        n,
        rows.iter().map(|o| if spec.offset { (o.exposure.unwrap_or(1) as f64).ln() } else { 0.0 }),
    );
    let weight = DVector::from_iterator(n, rows.iter().map(|o| o.weight));
    if weight.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("observation weights must be positive and finite"));
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &rows {
        ids.entry(o.user_id.as_str()).or_insert(0);
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let cluster = rows.iter().map(|o| ids[o.user_id.as_str()]).collect();
    let design = Design {
        x,
        y,
        offset,
        weight,
        cluster,
        n_clusters: ids.len(),
        terms: spec.terms.clone(),
        dropped,
    };
    check_rank(&design)?;
    Ok(design)
}

/// Greedy rank check: a column that lies in the span of the columns before it
/// is reported together with the columns it depends on.
fn check_rank(d: &Design) -> Result<()> {
    let n = d.x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..d.x.ncols() {
        let col = d.x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-9 * norm.max(1.0) * (n as f64).sqrt().max(1.0) {
            // Name the offending column and the earlier columns it loads on.
            let mut names = vec![d.terms[j].to_string()];
            if norm > 0.0 {
                for (q, k) in basis.iter().zip(&kept) {
                    if q.dot(&col).abs() > 1e-9 * norm {
                        names.push(d.terms[*k].to_string());
                    }
                }
            }
            for name in names {
                if !collinear.contains(&name) {
                    collinear.push(name);
                }
            }
            continue;
        }
        basis.push(r / rn);
        kept.push(j);
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::SingularDesign(collinear))
    }
}
