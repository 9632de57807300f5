use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/taxonomy.toml");

/// A `category:subcategory` pair, the unit of identity throughout the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentityId {
    pub category: String,
    pub subcategory: String,
}

impl IdentityId {
    pub fn new(category: impl Into<String>, subcategory: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            subcategory: subcategory.into(),
        }
    }

    /// Name of the identity classifier score column for this identity.
    pub fn score_name(&self) -> String {
        format!("identity:{self}")
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.category, self.subcategory)
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((c, sub)) if !c.is_empty() && !sub.is_empty() => Ok(Self::new(c, sub)),
            _ => Err(Error::invalid(format!("identity `{s}` is not of the form category:subcategory"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityRule {
    pub pattern: String,
    pub word_boundary_anchored: bool,
    pub case_insensitive: bool,
}

impl IdentityRule {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            word_boundary_anchored: true,
            case_insensitive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subcategory {
    pub name: String,
    pub rules: Vec<IdentityRule>,
    pub examples: Vec<String>,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub mutually_exclusive: bool,
    pub subcategories: Vec<Subcategory>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub categories: Vec<Category>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaxonomy {
    #[serde(default)]
    category: Vec<RawCategory>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCategory {
    name: String,
    #[serde(default)]
    mutually_exclusive: bool,
    #[serde(default)]
    subcategory: Vec<RawSubcategory>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubcategory {
    name: String,
    #[serde(default)]
    patterns: Vec<RawRule>,
    #[serde(default)]
    examples: Vec<String>,
    #[serde(default = "yes")]
    retained: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawRule {
    Plain(String),
    Full {
        pattern: String,
        #[serde(default = "yes")]
        word_boundary_anchored: bool,
        #[serde(default = "yes")]
        case_insensitive: bool,
    },
}

impl From<RawRule> for IdentityRule {
    fn from(raw: RawRule) -> Self {
        match raw {
            RawRule::Plain(pattern) => IdentityRule::new(pattern),
            RawRule::Full {
                pattern,
                word_boundary_anchored,
                case_insensitive,
            } => IdentityRule {
                pattern,
                word_boundary_anchored,
                case_insensitive,
            },
        }
    }
}

impl Taxonomy {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawTaxonomy = toml::from_str(text).map_err(|e| Error::Taxonomy(e.to_string()))?;
        let taxonomy = Taxonomy {
            categories: raw
                .category
                .into_iter()
                .map(|c| Category {
                    name: c.name,
                    mutually_exclusive: c.mutually_exclusive,
                    subcategories: c
                        .subcategory
                        .into_iter()
                        .map(|s| Subcategory {
                            name: s.name,
                            rules: s.patterns.into_iter().map(IdentityRule::from).collect(),
                            examples: s.examples,
                            retained: s.retained,
                        })
                        .collect(),
                })
                .collect(),
        };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The starter taxonomy shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled taxonomy is valid")
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Taxonomy("no categories".into()));
        }
        let mut names = BTreeSet::new();
        for cat in &self.categories {
            if cat.name.is_empty() || cat.name.contains(':') {
                return Err(Error::Taxonomy(format!("invalid category name `{}`", cat.name)));
            }
            if !names.insert(cat.name.as_str()) {
                return Err(Error::Taxonomy(format!("duplicate category `{}`", cat.name)));
            }
            let mut subs = BTreeSet::new();
            for sub in &cat.subcategories {
                if sub.name.is_empty() || sub.name.contains(':') {
                    return Err(Error::Taxonomy(format!("invalid subcategory name `{}:{}`", cat.name, sub.name)));
                }
                if !subs.insert(sub.name.as_str()) {
                    return Err(Error::Taxonomy(format!("duplicate subcategory `{}:{}`", cat.name, sub.name)));
                }
                if sub.rules.is_empty() {
                    return Err(Error::Taxonomy(format!("subcategory `{}:{}` has no rules", cat.name, sub.name)));
                }
            }
        }
        Ok(())
    }

    /// Identities that take part in labeling, in declaration order.
    pub fn retained_identities(&self) -> Vec<IdentityId> {
        self.categories
            .iter()
            .flat_map(|c| {
                c.subcategories
                    .iter()
                    .filter(|s| s.retained)
                    .map(move |s| IdentityId::new(&c.name, &s.name))
            })
            .collect()
    }

    pub fn subcategory(&self, id: &IdentityId) -> Option<&Subcategory> {
        self.categories
            .iter()
            .find(|c| c.name == id.category)?
            .subcategories
            .iter()
            .find(|s| s.name == id.subcategory)
    }
}
