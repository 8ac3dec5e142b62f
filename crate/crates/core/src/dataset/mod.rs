//! Implicit-feedback interaction data: ingestion, k-core filtering, seeded
//! splitting and the canonical on-disk layout.

mod canonical;
mod ingest;
mod kcore;
mod split;

use std::collections::HashSet;

use crate::error::{Error, Result};

pub use canonical::{read_interaction_dir, read_split, write_interaction_dir, write_split, SPLIT_FORMAT_VERSION};
pub use ingest::{ingest_interactions, parse_interactions, InputFormat};
pub use kcore::k_core_filter;
pub use split::{split, SplitRatios};

/// Deduplicated `(user, item)` pairs over dense 0-based indices, with the
/// external id of every index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    pairs: Vec<(usize, usize)>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionSet {
    /// Validates index bounds and uniqueness of pairs and ids.
    pub fn new(user_ids: Vec<String>, item_ids: Vec<String>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        check_unique(&user_ids, "user")?;
        check_unique(&item_ids, "item")?;
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(u, i) in &pairs {
            if u >= user_ids.len() || i >= item_ids.len() {
                return Err(Error::Invalid(format!(
                    "pair ({u}, {i}) out of range for {} users, {} items",
                    user_ids.len(),
                    item_ids.len()
                )));
            }
            if !seen.insert((u, i)) {
                return Err(Error::Invalid(format!("duplicate pair ({u}, {i})")));
            }
        }
        Ok(Self {
            pairs,
            user_ids,
            item_ids,
        })
    }

    /// Builds a set from external id pairs, assigning indices in first-seen
    /// order and dropping exact duplicates.
    pub fn from_id_pairs<I, U, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (U, T)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut b = SetBuilder::default();
        for (u, i) in pairs {
            b.push(u.as_ref(), i.as_ref());
        }
        b.finish()
    }

    pub fn empty_like(&self) -> Self {
        Self {
            pairs: Vec::new(),
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_users()];
        for &(u, _) in &self.pairs {
            d[u] += 1;
        }
        d
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_items()];
        for &(_, i) in &self.pairs {
            d[i] += 1;
        }
        d
    }

    /// `|pairs| / (n_users · n_items)`.
    pub fn density(&self) -> f64 {
        density(self.len(), self.n_users(), self.n_items())
    }

    /// Per-user sorted item lists.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for &(u, i) in &self.pairs {
            out[u].push(i);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    /// Keeps only pairs whose user and item survive, re-densifying indices
    /// while preserving the relative order of survivors.
    pub(crate) fn restrict(&self, keep_users: &[bool], keep_items: &[bool]) -> Self {
        let (user_map, user_ids) = remap(&self.user_ids, keep_users);
        let (item_map, item_ids) = remap(&self.item_ids, keep_items);
        let pairs = self
            .pairs
            .iter()
            .filter_map(|&(u, i)| Some((user_map[u]?, item_map[i]?)))
            .collect();
        Self {
            pairs,
            user_ids,
            item_ids,
        }
    }
}

pub fn density(n_pairs: usize, n_users: usize, n_items: usize) -> f64 {
    if n_users == 0 || n_items == 0 {
        return 0.0;
    }
    n_pairs as f64 / (n_users as f64 * n_items as f64)
}

fn remap(ids: &[String], keep: &[bool]) -> (Vec<Option<usize>>, Vec<String>) {
    let mut map = vec![None; ids.len()];
    let mut kept = Vec::new();
    for (old, id) in ids.iter().enumerate() {
        if keep[old] {
            map[old] = Some(kept.len());
            kept.push(id.clone());
        }
    }
    (map, kept)
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Invalid(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

#[derive(Default)]
pub(crate) struct SetBuilder {
    users: std::collections::HashMap<String, usize>,
    items: std::collections::HashMap<String, usize>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    seen: HashSet<(usize, usize)>,
    pairs: Vec<(usize, usize)>,
}

impl SetBuilder {
    pub(crate) fn push(&mut self, user: &str, item: &str) {
        let u = intern(&mut self.users, &mut self.user_ids, user);
        let i = intern(&mut self.items, &mut self.item_ids, item);
        if self.seen.insert((u, i)) {
            self.pairs.push((u, i));
        }
    }

    pub(crate) fn finish(self) -> InteractionSet {
        InteractionSet {
            pairs: self.pairs,
            user_ids: self.user_ids,
            item_ids: self.item_ids,
        }
    }
}

fn intern(map: &mut std::collections::HashMap<String, usize>, ids: &mut Vec<String>, key: &str) -> usize {
    if let Some(&idx) = map.get(key) {
        return idx;
    }
    let idx = ids.len();
    map.insert(key.to_owned(), idx);
    ids.push(key.to_owned());
    idx
}

/// Train, validation and test parts over one shared id space.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Validation pairs dropped because their user or item never occurs in train.
    pub dropped_validation: usize,
    pub dropped_test: usize,
}

impl DatasetSplit {
    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    pub fn user_ids(&self) -> &[String] {
        self.train.user_ids()
    }

    pub fn item_ids(&self) -> &[String] {
        self.train.item_ids()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_id_pairs_dedups_and_orders() {
        let s = InteractionSet::from_id_pairs([("u1", "iA"), ("u1", "iA"), ("u2", "iB")]);
        assert_eq!(s.n_users(), 2);
        assert_eq!(s.n_items(), 2);
        assert_eq!(s.pairs(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn new_validates() {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(InteractionSet::new(ids(&["a"]), ids(&["x"]), vec![(0, 1)]).is_err());
        assert!(InteractionSet::new(ids(&["a"]), ids(&["x"]), vec![(0, 0), (0, 0)]).is_err());
        assert!(InteractionSet::new(ids(&["a", "a"]), ids(&["x"]), vec![]).is_err());
        assert!(InteractionSet::new(ids(&["a"]), ids(&["x"]), vec![(0, 0)]).is_ok());
    }

    #[test]
    fn restrict_redensifies_in_order() {
        let s = InteractionSet::from_id_pairs([("a", "x"), ("b", "y"), ("c", "x"), ("c", "z")]);
        let r = s.restrict(&[true, false, true], &[true, true, true]);
        assert_eq!(r.user_ids(), &["a".to_string(), "c".to_string()]);
        assert_eq!(r.pairs(), &[(0, 0), (1, 0), (1, 2)]);
    }

    #[test]
    fn density_matches_counts() {
        // MovieLens-TMDB statistics: 998,539 interactions over 6,040 × 3,260.
        let d = density(998_539, 6_040, 3_260);
        assert!((d - 0.05071).abs() < 5e-6, "{d}");
    }
}
