//! All-ranking top-K evaluation and paired significance testing.
//!
//! Every item a user has not interacted with in the masked sets is a
//! candidate; the user's held-out items are the positives. Relevance is
//! binary and ties in score are broken by ascending item index.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{DatasetSplit, InteractionSet};
use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::model::{forward, Embeddings, ModelCheckpoint};
use crate::numerics::dot;

pub const DEFAULT_K: usize = 20;

/// Indices of the `k` highest-scoring unmasked entries, best first. Returns
/// fewer than `k` when fewer candidates exist.
pub fn top_k(scores: &[f64], masked: &[bool], k: usize) -> Result<Vec<usize>> {
    debug_assert_eq!(scores.len(), masked.len());
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !masked[i]).collect();
    if cand.is_empty() {
        return Err(Error::Invalid("every item is masked".into()));
    }
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    Ok(cand)
}

/// Top-`k` unmasked items for user `u` by inner-product score.
pub fn rank_topk(emb: &Embeddings, u: usize, mask: &[usize], k: usize) -> Result<Vec<usize>> {
    if u >= emb.users.rows() {
        return Err(Error::Invalid(format!("user {u} out of range")));
    }
    let n_items = emb.items.rows();
    let mut masked = vec![false; n_items];
    for &i in mask {
        *masked
            .get_mut(i)
            .ok_or_else(|| Error::Invalid(format!("masked item {i} out of range")))? = true;
    }
    let scores = user_scores(emb, u);
    top_k(&scores, &masked, k)
}

fn user_scores(emb: &Embeddings, u: usize) -> Vec<f64> {
    let eu = emb.users.row(u);
    (0..emb.items.rows()).map(|i| dot(eu, emb.items.row(i))).collect()
}

/// `|topk[..k] ∩ test| / |test|`.
pub fn recall_at_k(topk: &[usize], test_items: &HashSet<usize>, k: usize) -> f64 {
    if test_items.is_empty() {
        return 0.0;
    }
    let hits = topk.iter().take(k).filter(|i| test_items.contains(i)).count();
    hits as f64 / test_items.len() as f64
}

/// Binary-relevance NDCG with the ideal DCG truncated at `min(|test|, k)`.
pub fn ndcg_at_k(topk: &[usize], test_items: &HashSet<usize>, k: usize) -> f64 {
    let ideal_hits = test_items.len().min(k);
    if ideal_hits == 0 {
        return 0.0;
    }
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test_items.contains(i))
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..ideal_hits).map(discount).sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub k: usize,
    /// Evaluated user indices, ascending; aligned with the per-user vectors.
    pub users: Vec<usize>,
    pub per_user_recall: Vec<f64>,
    pub per_user_ndcg: Vec<f64>,
    pub mean_recall: f64,
    pub mean_ndcg: f64,
    /// Users skipped because they have no held-out items.
    pub n_skipped_users: usize,
    /// SHA-256 over the sorted masked `(user, item)` pairs.
    pub masked_sets_digest: String,
}

impl EvalResult {
    pub fn n_evaluated_users(&self) -> usize {
        self.users.len()
    }
}

/// Evaluates every user with at least one pair in `target`, masking the
/// pairs of `masks`.
pub fn evaluate(emb: &Embeddings, target: &InteractionSet, masks: &[&InteractionSet], k: usize) -> Result<EvalResult> {
    let n_users = emb.users.rows();
    let n_items = emb.items.rows();
    if target.n_users() != n_users || target.n_items() != n_items {
        return Err(Error::Shape(format!(
            "embeddings cover {n_users} users / {n_items} items, data {} / {}",
            target.n_users(),
            target.n_items()
        )));
    }
    let held_out = target.items_by_user();
    let mut masked_items: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for m in masks {
        for (u, items) in m.items_by_user().into_iter().enumerate() {
            masked_items[u].extend(items);
        }
    }
    for v in masked_items.iter_mut() {
        v.sort_unstable();
        v.dedup();
    }
    let digest = mask_digest(&masked_items);

    let users: Vec<usize> = (0..n_users).filter(|&u| !held_out[u].is_empty()).collect();
    if users.is_empty() {
        return Err(Error::Invalid("no evaluable users: every held-out set is empty".into()));
    }
    let metrics: Vec<(f64, f64)> = users
        .par_iter()
        .map(|&u| {
            let topk = rank_topk(emb, u, &masked_items[u], k)?;
            let test: HashSet<usize> = held_out[u].iter().copied().collect();
            Ok((recall_at_k(&topk, &test, k), ndcg_at_k(&topk, &test, k)))
        })
        .collect::<Result<_>>()?;
    let per_user_recall: Vec<f64> = metrics.iter().map(|m| m.0).collect();
    let per_user_ndcg: Vec<f64> = metrics.iter().map(|m| m.1).collect();
    let n = users.len() as f64;
    Ok(EvalResult {
        k,
        mean_recall: per_user_recall.iter().sum::<f64>() / n,
        mean_ndcg: per_user_ndcg.iter().sum::<f64>() / n,
        n_skipped_users: n_users - users.len(),
        users,
        per_user_recall,
        per_user_ndcg,
        masked_sets_digest: digest,
    })
}

fn mask_digest(masked: &[Vec<usize>]) -> String {
    let mut h = Sha256::new();
    for (u, items) in masked.iter().enumerate() {
        for i in items {
            h.update(format!("{u}\t{i}\n").as_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Test-time evaluation: masks train and validation interactions.
pub fn evaluate_test(emb: &Embeddings, split: &DatasetSplit, k: usize) -> Result<EvalResult> {
    evaluate(emb, &split.test, &[&split.train, &split.validation], k)
}

/// Validation-time evaluation: masks train interactions only.
pub fn evaluate_validation(emb: &Embeddings, split: &DatasetSplit, k: usize) -> Result<EvalResult> {
    evaluate(emb, &split.validation, &[&split.train], k)
}

/// Runs the checkpoint's forward pass on the split's training graph and
/// evaluates on the test part.
pub fn evaluate_checkpoint(ckpt: &ModelCheckpoint, split: &DatasetSplit, k: usize) -> Result<EvalResult> {
    let graph = InteractionGraph::build(&split.train);
    let (emb, _) = forward(&graph, &ckpt.params, &ckpt.variant)?;
    evaluate_test(&emb, split, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// Paired two-sided Student t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("t-test on {} vs {} values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid("t-test needs at least two paired values".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateTTest);
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(TTest {
        t,
        p: t_two_sided_p(t, (n - 1) as f64),
        n,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Per-user metrics report as written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub rows: Vec<(String, f64, f64)>,
}

/// TSV header `user<TAB>recall@K<TAB>ndcg@K`, one row per evaluated user,
/// then a `# mean` summary line.
pub fn format_report(result: &EvalResult, user_ids: &[String]) -> String {
    let k = result.k;
    let mut out = format!("user\trecall@{k}\tndcg@{k}\n");
    for ((&u, r), n) in result.users.iter().zip(&result.per_user_recall).zip(&result.per_user_ndcg) {
        writeln!(out, "{}\t{r}\t{n}", user_ids[u]).expect("write to String");
    }
    writeln!(
        out,
        "# mean\t{}\t{}\tusers={}\tskipped={}\tmask_sha256={}",
        result.mean_recall,
        result.mean_ndcg,
        result.n_evaluated_users(),
        result.n_skipped_users,
        result.masked_sets_digest
    )
    .expect("write to String");
    out
}

pub fn write_report(path: &Path, result: &EvalResult, user_ids: &[String]) -> Result<()> {
    fs::write(path, format_report(result, user_ids)).map_err(|e| Error::io(path, e))
}

pub fn parse_report(text: &str, origin: &Path) -> Result<MetricsReport> {
    let bad = |line: usize, msg: &str| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty report"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    let k = match cols.as_slice() {
        ["user", r, n] if r.starts_with("recall@") && n.starts_with("ndcg@") => r["recall@".len()..]
            .parse::<usize>()
            .map_err(|_| bad(1, "bad cutoff in header"))?,
        _ => return Err(bad(1, "expected header user<TAB>recall@K<TAB>ndcg@K")),
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(idx + 1, "expected three columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(idx + 1, "bad metric value"));
        rows.push((f[0].to_string(), num(f[1])?, num(f[2])?));
    }
    Ok(MetricsReport { k, rows })
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text, path)
}

/// Paired t-tests on recall and NDCG between two reports over the same users.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> Result<(TTest, TTest)> {
    if a.k != b.k {
        return Err(Error::Invalid(format!("reports use different cutoffs: {} vs {}", a.k, b.k)));
    }
    let index: std::collections::HashMap<&str, usize> =
        b.rows.iter().enumerate().map(|(i, r)| (r.0.as_str(), i)).collect();
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    let mut na = Vec::new();
    let mut nb = Vec::new();
    for (user, r, n) in &a.rows {
        let j = *index
            .get(user.as_str())
            .ok_or_else(|| Error::Invalid(format!("alignment error: user {user:?} missing from second report")))?;
        ra.push(*r);
        rb.push(b.rows[j].1);
        na.push(*n);
        nb.push(b.rows[j].2);
    }
    if a.rows.len() != b.rows.len() {
        return Err(Error::Invalid(format!(
            "alignment error: reports cover {} and {} users",
            a.rows.len(),
            b.rows.len()
        )));
    }
    Ok((paired_t_test(&ra, &rb)?, paired_t_test(&na, &nb)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use crate::rng::SplitMix64;

    fn set(v: &[usize]) -> HashSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn single_candidate() {
        assert_eq!(top_k(&[0.1, 5.0, 0.3], &[true, true, false], 20).unwrap(), vec![2]);
        assert!(top_k(&[0.1], &[true], 20).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(top_k(&[1.0, 1.0, 1.0], &[false; 3], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(top_k(&[0.0, 2.0, 2.0, 1.0], &[false; 4], 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn top_k_matches_full_sort() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..20 {
            // Coarse scores so ties are common.
            let scores: Vec<f64> = (0..50).map(|_| rng.below(10) as f64).collect();
            let masked: Vec<bool> = (0..50).map(|_| rng.next_f64() < 0.2).collect();
            let mut all: Vec<usize> = (0..50).filter(|&i| !masked[i]).collect();
            all.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            all.truncate(20);
            assert_eq!(top_k(&scores, &masked, 20).unwrap(), all);
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[3, 1, 2], &set(&[1, 3]), 20), 1.0);
        assert_eq!(recall_at_k(&[3, 5, 2], &set(&[3, 4]), 20), 0.5);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[7, 1, 2], &set(&[7]), 20), 1.0);
        let v = ndcg_at_k(&[1, 7, 2], &set(&[7]), 20);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[1, 2], &set(&[7]), 20), 0.0);
        assert_eq!(ndcg_at_k(&[7, 8, 1], &set(&[7, 8]), 20), 1.0);
    }

    #[test]
    fn rank_topk_never_returns_masked() {
        let mut rng = SplitMix64::new(8);
        let emb = Embeddings {
            users: Matrix::glorot(3, 4, 1, 1, &mut rng),
            items: Matrix::glorot(30, 4, 1, 1, &mut rng),
        };
        let mask = [0, 5, 9, 12, 29];
        for u in 0..3 {
            let top = rank_topk(&emb, u, &mask, 20).unwrap();
            assert_eq!(top.len(), 20);
            assert!(top.iter().all(|i| !mask.contains(i)));
        }
        assert!(rank_topk(&emb, 3, &mask, 20).is_err());
    }

    #[test]
    fn evaluate_hand_traced() {
        // 3 users, 4 items. Scores are user-independent: item 3 > 2 > 1 > 0.
        let users = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let items = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let emb = Embeddings { users, items };
        let ids = |p: &[(usize, usize)]| {
            InteractionSet::new(
                (0..3).map(|u| format!("u{u}")).collect(),
                (0..4).map(|i| format!("i{i}")).collect(),
                p.to_vec(),
            )
            .unwrap()
        };
        let train = ids(&[(0, 3), (1, 0), (2, 2)]);
        let test = ids(&[(0, 2), (1, 1), (1, 3)]);
        // k = 1. u0 ranks [2] → hit. u1 ranks [3] → recall 1/2, ndcg 1.0
        // (ideal truncated at one slot). u2 has no test items and is skipped.
        let r = evaluate(&emb, &test, &[&train], 1).unwrap();
        assert_eq!(r.users, vec![0, 1]);
        assert_eq!(r.per_user_recall, vec![1.0, 0.5]);
        assert_eq!(r.per_user_ndcg, vec![1.0, 1.0]);
        assert_eq!(r.mean_recall, 0.75);
        assert_eq!(r.n_skipped_users, 1);
        // k = 2. u1 ranks [3, 2]: one hit at rank 0 → recall 0.5, ndcg 1/(1 + 1/log2 3).
        let r = evaluate(&emb, &test, &[&train], 2).unwrap();
        let expected = 1.0 / (1.0 + 1.0 / 3f64.log2());
        assert!((r.per_user_ndcg[1] - expected).abs() < 1e-15);
        assert!((r.mean_ndcg - (1.0 + expected) / 2.0).abs() < 1e-15);

        let empty = ids(&[]);
        assert!(evaluate(&emb, &empty, &[&train], 20).is_err());
    }

    #[test]
    fn t_test_examples() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        let a: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        assert!(matches!(paired_t_test(&a, &a), Err(Error::DegenerateTTest)));
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
    }

    /// Two-sided p by Simpson integration of the Student t density.
    fn p_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
            - statrs::function::gamma::ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 200_000;
        let h = t.abs() / n as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for j in 1..n {
            s += pdf(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn p_value_matches_quadrature() {
        let oracle = p_by_quadrature(2.5, 9.0);
        assert!((oracle - 0.0339).abs() < 1e-4, "{oracle}");
        assert!((t_two_sided_p(2.5, 9.0) - oracle).abs() < 1e-9);
        for (t, df) in [(0.3, 4.0), (1.7, 29.0), (-3.2, 12.0)] {
            assert!((t_two_sided_p(t, df) - p_by_quadrature(t, df)).abs() < 1e-9);
        }
    }

    #[test]
    fn report_roundtrip_and_compare() {
        let result = EvalResult {
            k: 20,
            users: vec![0, 2],
            per_user_recall: vec![0.5, 1.0 / 3.0],
            per_user_ndcg: vec![0.25, 0.1],
            mean_recall: (0.5 + 1.0 / 3.0) / 2.0,
            mean_ndcg: 0.175,
            n_skipped_users: 1,
            masked_sets_digest: "x".into(),
        };
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let text = format_report(&result, &ids);
        let rep = parse_report(&text, Path::new("r.tsv")).unwrap();
        assert_eq!(rep.k, 20);
        assert_eq!(rep.rows, vec![("a".into(), 0.5, 0.25), ("c".into(), 1.0 / 3.0, 0.1)]);

        assert!(matches!(compare_reports(&rep, &rep), Err(Error::DegenerateTTest)));
        let other = MetricsReport {
            k: 20,
            rows: vec![("x".into(), 0.0, 0.0), ("y".into(), 0.0, 0.0)],
        };
        let err = compare_reports(&rep, &other).unwrap_err();
        assert!(err.to_string().contains("alignment"));
    }
}
