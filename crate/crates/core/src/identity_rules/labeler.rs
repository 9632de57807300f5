use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use regex::{Regex, RegexBuilder, RegexSet, RegexSetBuilder};
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use super::taxonomy::{IdentityId, IdentityRule, Taxonomy};
use crate::error::{Error, Result};

const REGEX_SIZE_LIMIT: usize = 256 << 20;

/// One matched subcategory with the byte span of its earliest match in the
/// normalized profile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdentityLabel {
    pub identity: IdentityId,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileLabels {
    /// Sorted by identity, at most one label per subcategory.
    pub labels: Vec<IdentityLabel>,
    /// Mutually exclusive categories with two or more matched subcategories.
    pub conflicts: BTreeSet<String>,
}

impl ProfileLabels {
    pub fn contains(&self, identity: &IdentityId) -> bool {
        self.labels.iter().any(|l| &l.identity == identity)
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn identities(&self) -> impl Iterator<Item = &IdentityId> {
        self.labels.iter().map(|l| &l.identity)
    }

    pub fn has_conflict(&self, category: &str) -> bool {
        self.conflicts.contains(category)
    }
}

/// NFC-normalize and trim a profile; label spans index into this text.
pub fn normalize_profile(text: &str) -> Cow<'_, str> {
    let trimmed = text.trim();
    if is_nfc_quick(trimmed.chars()) == IsNormalized::Yes {
        Cow::Borrowed(trimmed)
    } else {
        Cow::Owned(trimmed.nfc().collect())
    }
}

struct CompiledRule {
    identity: usize,
    regex: Regex,
}

/// Compiled taxonomy: a single regex set for detection plus per-rule regexes
/// for span extraction. Immutable and shareable across threads.
pub struct Matcher {
    set: RegexSet,
    rules: Vec<CompiledRule>,
    identities: Vec<IdentityId>,
    exclusive: BTreeMap<String, bool>,
}

fn wrap(rule: &IdentityRule) -> String {
    let flags = if rule.case_insensitive { "(?i)" } else { "" };
    if rule.word_boundary_anchored {
        format!(r"{flags}(?:^|[^\p{{L}}\p{{N}}])({})(?:$|[^\p{{L}}\p{{N}}])", rule.pattern)
    } else {
        format!("{flags}({})", rule.pattern)
    }
}

impl Matcher {
    /// Compile every retained subcategory of `taxonomy`.
    pub fn compile(taxonomy: &Taxonomy) -> Result<Self> {
        taxonomy.validate()?;
        let mut identities = Vec::new();
        let mut rules = Vec::new();
        let mut sources = Vec::new();
        let mut exclusive = BTreeMap::new();
        for cat in &taxonomy.categories {
            exclusive.insert(cat.name.clone(), cat.mutually_exclusive);
            for sub in cat.subcategories.iter().filter(|s| s.retained) {
                let identity = identities.len();
                identities.push(IdentityId::new(&cat.name, &sub.name));
                for (index, rule) in sub.rules.iter().enumerate() {
                    let source = wrap(rule);
                    let regex = RegexBuilder::new(&source)
                        .size_limit(REGEX_SIZE_LIMIT)
                        .build()
                        .map_err(|e| Error::InvalidRule {
                            category: cat.name.clone(),
                            subcategory: sub.name.clone(),
                            index,
                            message: e.to_string(),
                        })?;
                    rules.push(CompiledRule { identity, regex });
                    sources.push(source);
                }
            }
        }
        if identities.is_empty() {
            return Err(Error::Taxonomy("no retained subcategories".into()));
        }
        let set = RegexSetBuilder::new(&sources)
            .size_limit(REGEX_SIZE_LIMIT)
            .dfa_size_limit(REGEX_SIZE_LIMIT)
            .build()
            .map_err(|e| Error::Taxonomy(e.to_string()))?;
        Ok(Self {
            set,
            rules,
            identities,
            exclusive,
        })
    }

    pub fn identities(&self) -> &[IdentityId] {
        &self.identities
    }

    /// Resolve a `category:subcategory` name against the retained identities.
    pub fn resolve(&self, name: &str) -> Result<IdentityId> {
        let unknown = || Error::UnknownIdentity {
            name: name.to_owned(),
            valid: self.identities.iter().map(ToString::to_string).collect(),
        };
        let id: IdentityId = name.parse().map_err(|_| unknown())?;
        if self.identities.contains(&id) {
            Ok(id)
        } else {
            Err(unknown())
        }
    }

    pub fn is_exclusive(&self, category: &str) -> bool {
        self.exclusive.get(category).copied().unwrap_or(false)
    }

    /// Label a profile with every matching subcategory.
    pub fn label(&self, profile: &str) -> ProfileLabels {
        let text = normalize_profile(profile);
        let mut best: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for rule_idx in self.set.matches(&text).iter() {
            let rule = &self.rules[rule_idx];
            let Some(span) = rule.regex.captures(&text).and_then(|c| c.get(1)).map(|m| (m.start(), m.end()))
            else {
                continue;
            };
            best.entry(rule.identity)
                .and_modify(|cur| *cur = (*cur).min(span))
                .or_insert(span);
        }
        let mut labels: Vec<IdentityLabel> = best
            .into_iter()
            .map(|(idx, span)| IdentityLabel {
                identity: self.identities[idx].clone(),
                span,
            })
            .collect();
        labels.sort();

        let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
        for l in &labels {
            *per_category.entry(l.identity.category.as_str()).or_default() += 1;
        }
        let conflicts = per_category
            .into_iter()
            .filter(|(cat, n)| *n >= 2 && self.is_exclusive(cat))
            .map(|(cat, _)| cat.to_owned())
            .collect();
        ProfileLabels { labels, conflicts }
    }

    /// True when `identity` is absent (and unconflicted) before and present
    /// (and unconflicted) after a profile change.
    pub fn discloses(&self, pre: &str, post: &str, identity: &IdentityId) -> bool {
        let pre = self.label(pre);
        let post = self.label(post);
        addition(&pre, &post, identity)
    }
}

#[cfg(test)]
pub(crate) fn bundled_matcher() -> &'static Matcher {
    static M: std::sync::OnceLock<Matcher> = std::sync::OnceLock::new();
    M.get_or_init(|| Matcher::compile(&Taxonomy::bundled()).unwrap())
}

pub(crate) fn addition(pre: &ProfileLabels, post: &ProfileLabels, identity: &IdentityId) -> bool {
    !pre.contains(identity)
        && post.contains(identity)
        && !pre.has_conflict(&identity.category)
        && !post.has_conflict(&identity.category)
}

/// Free-function form of [`Matcher::label`].
pub fn label_profile(matcher: &Matcher, profile: &str) -> ProfileLabels {
    matcher.label(profile)
}
