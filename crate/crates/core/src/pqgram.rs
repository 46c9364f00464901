//! pq-gram profiles and the pq-gram distance between labeled ordered trees.
//!
//! A pq-gram is the label tuple of `p - 1` ancestors, an anchor and `q`
//! consecutive children of the anchor in the tree extended with `*` dummies:
//! `p - 1` above the root, `q - 1` on each side of every non-empty child
//! list and `q` below every leaf. The profile is the bag of all such tuples.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Node, Program, DUMMY};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PqGramError {
    #[error("invalid pq-gram parameters p={p}, q={q}: both must be at least 1")]
    InvalidParams { p: usize, q: usize },
    #[error("node label `*` is reserved for dummy positions")]
    ReservedLabel,
    #[error("profiles were built with different parameters ({0} vs {1})")]
    ParamMismatch(PqParams, PqParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PqParams {
    pub p: usize,
    pub q: usize,
}

impl PqParams {
    pub fn new(p: usize, q: usize) -> Result<Self, PqGramError> {
        if p == 0 || q == 0 {
            return Err(PqGramError::InvalidParams { p, q });
        }
        Ok(PqParams { p, q })
    }
}

impl Default for PqParams {
    fn default() -> Self {
        PqParams { p: 2, q: 3 }
    }
}

impl fmt::Display for PqParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.p, self.q)
    }
}

/// Bag key of one gram: its labels, each prefixed with its byte length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GramKey(String);

impl GramKey {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut key = String::new();
        for label in labels {
            key.push_str(&label.len().to_string());
            key.push(':');
            key.push_str(label);
        }
        GramKey(key)
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.0.as_str();
        while let Some((len, tail)) = rest.split_once(':') {
            let len: usize = len.parse().expect("gram keys are length-prefixed");
            out.push(&tail[..len]);
            rest = &tail[len..];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqGramProfile {
    params: PqParams,
    grams: BTreeMap<GramKey, usize>,
    size: usize,
}

impl PqGramProfile {
    pub fn params(&self) -> PqParams {
        self.params
    }

    /// Total number of grams, counting multiplicity.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn distinct(&self) -> usize {
        self.grams.len()
    }

    pub fn count(&self, key: &GramKey) -> usize {
        self.grams.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GramKey, usize)> {
        self.grams.iter().map(|(k, &c)| (k, c))
    }

    /// Size of the bag intersection (per-gram minimum multiplicity).
    pub fn intersection_size(&self, other: &PqGramProfile) -> usize {
        let (small, large) = if self.grams.len() <= other.grams.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .grams
            .iter()
            .map(|(key, &count)| count.min(large.count(key)))
            .sum()
    }

    /// The `k` most frequent grams, ties in key order.
    pub fn top(&self, k: usize) -> Vec<(Vec<&str>, usize)> {
        let mut all: Vec<_> = self.grams.iter().collect();
        all.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        all.into_iter()
            .take(k)
            .map(|(key, &count)| (key.labels(), count))
            .collect()
    }

    fn insert(&mut self, key: GramKey) {
        *self.grams.entry(key).or_insert(0) += 1;
        self.size += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distance(f64);

impl Distance {
    pub const ZERO: Distance = Distance(0.0);
    pub const ONE: Distance = Distance(1.0);

    /// Clamps into `[0, 1]`.
    pub fn new(value: f64) -> Self {
        Distance(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn total_cmp(&self, other: &Distance) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Computes the profile in one preorder pass, keeping a shift register of
/// the `p` nearest ancestors and one of the `q` most recent children.
pub fn profile(tree: &Node, params: PqParams) -> Result<PqGramProfile, PqGramError> {
    let mut out = PqGramProfile {
        params,
        grams: BTreeMap::new(),
        size: 0,
    };
    let ancestors: VecDeque<&str> = std::iter::repeat_n(DUMMY, params.p).collect();
    collect(tree, ancestors, params.q, &mut out)?;
    Ok(out)
}

fn collect<'t>(
    node: &'t Node,
    mut ancestors: VecDeque<&'t str>,
    q: usize,
    out: &mut PqGramProfile,
) -> Result<(), PqGramError> {
    if node.label == DUMMY {
        return Err(PqGramError::ReservedLabel);
    }
    ancestors.pop_front();
    ancestors.push_back(&node.label);

    let mut window: VecDeque<&str> = std::iter::repeat_n(DUMMY, q).collect();
    let emit = |window: &VecDeque<&str>, out: &mut PqGramProfile| {
        out.insert(GramKey::from_labels(
            ancestors.iter().chain(window.iter()).copied(),
        ));
    };

    if node.children.is_empty() {
        emit(&window, out);
        return Ok(());
    }
    for child in &node.children {
        window.pop_front();
        window.push_back(&child.label);
        emit(&window, out);
        collect(child, ancestors.clone(), q, out)?;
    }
    for _ in 1..q {
        window.pop_front();
        window.push_back(DUMMY);
        emit(&window, out);
    }
    Ok(())
}

/// `1 - 2 |P1 ∩ P2| / (|P1| + |P2|)` over bags.
pub fn distance(a: &PqGramProfile, b: &PqGramProfile) -> Result<Distance, PqGramError> {
    if a.params != b.params {
        return Err(PqGramError::ParamMismatch(a.params, b.params));
    }
    let total = a.size + b.size;
    if total == 0 {
        return Ok(Distance::ZERO);
    }
    let shared = a.intersection_size(b);
    let value = 1.0 - 2.0 * shared as f64 / total as f64;
    Ok(Distance(value.clamp(0.0, 1.0)))
}

pub fn tree_distance(a: &Node, b: &Node, params: PqParams) -> Result<Distance, PqGramError> {
    distance(&profile(a, params)?, &profile(b, params)?)
}

pub fn program_profile(program: &Program, params: PqParams) -> Result<PqGramProfile, PqGramError> {
    profile(&program.tree(), params)
}

pub fn program_distance(
    src: &Program,
    tgt: &Program,
    params: PqParams,
) -> Result<Distance, PqGramError> {
    distance(
        &program_profile(src, params)?,
        &program_profile(tgt, params)?,
    )
}

/// Closed-form profile size: one gram per leaf, `k + q - 1` per node with `k` children.
pub fn expected_size(tree: &Node, q: usize) -> usize {
    tree.preorder()
        .map(|n| match n.children.len() {
            0 => 1,
            k => k + q - 1,
        })
        .sum()
}
