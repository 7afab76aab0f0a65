//! Ranked result lists shared by every retriever and reranker.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// One scored hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

/// Descending score, ascending id on ties.
pub fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// An ordered list of `(workflow id, score)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedList(Vec<Scored>);

impl RankedList {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Sorts `hits` by the ranking rule and keeps the first `k`.
    pub fn top_k(mut hits: Vec<Scored>, k: usize) -> Self {
        hits.sort_by(rank_order);
        hits.truncate(k);
        Self(hits)
    }

    /// Wraps an already-ordered list without re-sorting. Used by the
    /// reranker, whose output order is not a pure function of `score`.
    pub fn from_ordered(hits: Vec<Scored>) -> Self {
        Self(hits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scored> {
        self.0.iter()
    }

    pub fn ids(&self) -> Vec<String> {
        self.0.iter().map(|s| s.id.clone()).collect()
    }

    pub fn as_slice(&self) -> &[Scored] {
        &self.0
    }

    pub fn truncate(&mut self, k: usize) {
        self.0.truncate(k);
    }

    pub fn into_vec(self) -> Vec<Scored> {
        self.0
    }

    /// True when ids are unique and the list obeys [`rank_order`].
    pub fn is_well_ordered(&self) -> bool {
        let mut seen = HashSet::new();
        self.0.iter().all(|s| seen.insert(s.id.as_str()))
            && self.0.windows(2).all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater)
    }
}

impl<'a> IntoIterator for &'a RankedList {
    type Item = &'a Scored;
    type IntoIter = std::slice::Iter<'a, Scored>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
