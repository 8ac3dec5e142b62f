use std::collections::VecDeque;

use super::InteractionSet;
use crate::error::{Error, Result};

/// Iteratively removes users and items with fewer than `k` interactions until
/// every survivor has degree `>= k`. Indices are re-densified in their
/// original relative order.
pub fn k_core_filter(data: &InteractionSet, k: usize) -> Result<InteractionSet> {
    if k == 0 {
        return Err(Error::Config("k-core requires k >= 1".into()));
    }
    let (nu, ni) = (data.n_users(), data.n_items());
    let pairs = data.pairs();

    // Node ids: users are 0..nu, items nu..nu+ni.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nu + ni];
    for (e, &(u, i)) in pairs.iter().enumerate() {
        incident[u].push(e);
        incident[nu + i].push(e);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut removed = vec![false; nu + ni];
    let mut edge_alive = vec![true; pairs.len()];
    let mut queue: VecDeque<usize> = (0..nu + ni).filter(|&n| degree[n] < k).collect();
    for &n in &queue {
        removed[n] = true;
    }

    while let Some(node) = queue.pop_front() {
        for &e in &incident[node] {
            if !edge_alive[e] {
                continue;
            }
            edge_alive[e] = false;
            let (u, i) = pairs[e];
            let other = if node < nu { nu + i } else { u };
            degree[other] -= 1;
            if !removed[other] && degree[other] < k {
                removed[other] = true;
                queue.push_back(other);
            }
        }
    }

    let keep_users: Vec<bool> = (0..nu).map(|u| !removed[u]).collect();
    let keep_items: Vec<bool> = (0..ni).map(|i| !removed[nu + i]).collect();
    let out = data.restrict(&keep_users, &keep_items);
    if out.is_empty() {
        return Err(Error::KCoreEmpty);
    }
    Ok(out)
}
