use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordered `(item_id, score)` pairs for one query.
///
/// Entries are sorted by descending score, then ascending item id, so every
/// list has a total order and ranks are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<(String, f64)>,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> core::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Sorts the scored items. Later duplicates of an id are dropped.
    pub fn from_scores<I, S>(query_id: &str, scored: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut seen = BTreeMap::new();
        let mut entries: Vec<(String, f64)> = Vec::new();
        for (id, score) in scored {
            let id: String = id.into();
            if seen.insert(id.clone(), ()).is_none() {
                entries.push((id, score));
            }
        }
        entries.sort_by(rank_order);
        Self {
            query_id: query_id.to_string(),
            entries,
        }
    }

    /// Keeps a pre-ordered list of ids as-is, scoring them `n, n-1, …, 1`.
    pub fn from_order<I, S>(query_id: &str, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let n = ids.len();
        Self::from_scores(
            query_id,
            ids.into_iter()
                .enumerate()
                .map(|(i, id)| (id, (n - i) as f64)),
        )
    }

    pub fn empty(query_id: &str) -> Self {
        Self {
            query_id: query_id.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.truncate(k);
        self
    }

    /// 1-based rank of `item`.
    pub fn rank_of(&self, item: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|(id, _)| id == item)
            .map(|p| p + 1)
            .ok_or_else(|| Error::ItemNotInList(item.to_string()))
    }

    /// Map from item id to 1-based rank.
    pub fn rank_map(&self) -> BTreeMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.as_str(), i + 1))
            .collect()
    }

    /// Checks the ordering and uniqueness invariants.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = BTreeMap::new();
        self.entries
            .iter()
            .all(|(id, _)| seen.insert(id.as_str(), ()).is_none())
            && self
                .entries
                .windows(2)
                .all(|w| rank_order(&w[0], &w[1]) == core::cmp::Ordering::Less)
    }
}
