//! Bipartite user-item graph and light graph convolution.
//!
//! One propagation step maps layer `l` to layer `l + 1` on both sides at
//! once, reading only layer `l`:
//!
//! ```text
//! next_u[u] = Σ_{i ∈ N(u)} w(u,i) · layer_i[i]
//! next_i[i] = Σ_{u ∈ N(i)} w(u,i) · layer_u[u]
//! w(u,i)    = 1 / sqrt(|N(u)| · |N(i)|)
//! ```
//!
//! Written as a block matrix over `[users; items]` the operator is the
//! symmetric matrix `[[0, A], [Aᵀ, 0]]`, so its adjoint is itself.

use rayon::prelude::*;

use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// CSR adjacency in both directions with per-edge normalisation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    n_users: usize,
    n_items: usize,
    user_ptr: Vec<usize>,
    user_items: Vec<usize>,
    user_norm: Vec<f64>,
    item_ptr: Vec<usize>,
    item_users: Vec<usize>,
    item_norm: Vec<f64>,
}

impl InteractionGraph {
    pub fn build(train: &InteractionSet) -> Self {
        let (nu, ni) = (train.n_users(), train.n_items());
        let du = train.user_degrees();
        let di = train.item_degrees();
        let norm = |u: usize, i: usize| 1.0 / ((du[u] * di[i]) as f64).sqrt();

        let (user_ptr, user_items) = csr(nu, train.pairs().iter().map(|&(u, i)| (u, i)));
        let (item_ptr, item_users) = csr(ni, train.pairs().iter().map(|&(u, i)| (i, u)));
        let user_norm = (0..nu)
            .flat_map(|u| user_items[user_ptr[u]..user_ptr[u + 1]].iter().map(move |&i| (u, i)))
            .map(|(u, i)| norm(u, i))
            .collect();
        let item_norm = (0..ni)
            .flat_map(|i| item_users[item_ptr[i]..item_ptr[i + 1]].iter().map(move |&u| (u, i)))
            .map(|(u, i)| norm(u, i))
            .collect();
        Self {
            n_users: nu,
            n_items: ni,
            user_ptr,
            user_items,
            user_norm,
            item_ptr,
            item_users,
            item_norm,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_edges(&self) -> usize {
        self.user_items.len()
    }

    /// Sorted items of user `u`.
    pub fn user_neighbors(&self, u: usize) -> &[usize] {
        &self.user_items[self.user_ptr[u]..self.user_ptr[u + 1]]
    }

    /// Edge weights aligned with [`Self::user_neighbors`].
    pub fn user_weights(&self, u: usize) -> &[f64] {
        &self.user_norm[self.user_ptr[u]..self.user_ptr[u + 1]]
    }

    /// Offset of user `u`'s first edge in the user-major edge order.
    pub fn user_edge_offset(&self, u: usize) -> usize {
        self.user_ptr[u]
    }

    /// Sorted users of item `i`.
    pub fn item_neighbors(&self, i: usize) -> &[usize] {
        &self.item_users[self.item_ptr[i]..self.item_ptr[i + 1]]
    }

    pub fn item_weights(&self, i: usize) -> &[f64] {
        &self.item_norm[self.item_ptr[i]..self.item_ptr[i + 1]]
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.user_neighbors(u).binary_search(&i).is_ok()
    }

    /// One synchronous propagation step.
    pub fn propagate(&self, layer_u: &Matrix, layer_i: &Matrix) -> Result<(Matrix, Matrix)> {
        if layer_u.rows() != self.n_users || layer_i.rows() != self.n_items || layer_u.cols() != layer_i.cols() {
            return Err(Error::Shape(format!(
                "propagate: user layer {:?}, item layer {:?} on a {}x{} graph",
                layer_u.shape(),
                layer_i.shape(),
                self.n_users,
                self.n_items
            )));
        }
        let d = layer_u.cols();
        let mut next_u = Matrix::zeros(self.n_users, d);
        let mut next_i = Matrix::zeros(self.n_items, d);
        aggregate(&mut next_u, d, &self.user_ptr, &self.user_items, &self.user_norm, layer_i);
        aggregate(&mut next_i, d, &self.item_ptr, &self.item_users, &self.item_norm, layer_u);
        Ok((next_u, next_i))
    }

    /// Adjoint of [`Self::propagate`]: maps gradients on layer `l + 1` to
    /// gradients on layer `l`. The operator is symmetric, so this is the
    /// same sparse product.
    pub fn propagate_backward(&self, grad_next_u: &Matrix, grad_next_i: &Matrix) -> Result<(Matrix, Matrix)> {
        self.propagate(grad_next_u, grad_next_i)
    }
}

fn csr(n_rows: usize, entries: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
    for (r, c) in entries {
        rows[r].push(c);
    }
    let mut ptr = Vec::with_capacity(n_rows + 1);
    let mut cols = Vec::new();
    ptr.push(0);
    for mut row in rows {
        row.sort_unstable();
        cols.extend(row);
        ptr.push(cols.len());
    }
    (ptr, cols)
}

fn aggregate(out: &mut Matrix, d: usize, ptr: &[usize], idx: &[usize], norm: &[f64], src: &Matrix) {
    if d == 0 {
        return;
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, row)| {
            for e in ptr[r]..ptr[r + 1] {
                let w = norm[e];
                for (o, s) in row.iter_mut().zip(src.row(idx[e])) {
                    *o += w * s;
                }
            }
        });
}

/// Divisor used when pooling the `L + 1` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineMode {
    /// Divide by `L + 1`: the arithmetic mean of all layers.
    #[default]
    Mean,
    /// Divide by `L`, so layer 0 carries extra weight. Only defined for
    /// `L >= 1`.
    DivideByL,
}

impl CombineMode {
    pub fn divisor(self, layers: usize) -> Result<f64> {
        match self {
            CombineMode::Mean => Ok((layers + 1) as f64),
            CombineMode::DivideByL if layers == 0 => Err(Error::Config(
                "combine_mode=paper_literal_L divides by L and needs at least one layer".into(),
            )),
            CombineMode::DivideByL => Ok(layers as f64),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CombineMode::Mean => "mean_Lplus1",
            CombineMode::DivideByL => "paper_literal_L",
        }
    }
}

impl std::str::FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_Lplus1" | "mean" => Ok(Self::Mean),
            "paper_literal_L" | "literal" => Ok(Self::DivideByL),
            other => Err(Error::Config(format!("unknown combine_mode {other:?}"))),
        }
    }
}

/// Embeddings of every layer `0..=L` on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub user_layers: Vec<Matrix>,
    pub item_layers: Vec<Matrix>,
}

impl LayerStack {
    /// Runs `layers` propagation steps from the given layer-0 embeddings.
    pub fn propagate_from(graph: &InteractionGraph, user0: Matrix, item0: Matrix, layers: usize) -> Result<Self> {
        let mut user_layers = vec![user0];
        let mut item_layers = vec![item0];
        for l in 0..layers {
            let (u, i) = graph.propagate(&user_layers[l], &item_layers[l])?;
            user_layers.push(u);
            item_layers.push(i);
        }
        Ok(Self {
            user_layers,
            item_layers,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.user_layers.len().saturating_sub(1)
    }

    /// Pools the layers into final `(E_u, E_i)`.
    pub fn combine(&self, mode: CombineMode) -> Result<(Matrix, Matrix)> {
        if self.user_layers.is_empty() || self.user_layers.len() != self.item_layers.len() {
            return Err(Error::Shape("incomplete layer stack".into()));
        }
        let scale = 1.0 / mode.divisor(self.num_layers())?;
        let pool = |layers: &[Matrix]| -> Result<Matrix> {
            let mut acc = Matrix::zeros(layers[0].rows(), layers[0].cols());
            for m in layers {
                acc.add_scaled(m, scale)?;
            }
            Ok(acc)
        };
        Ok((pool(&self.user_layers)?, pool(&self.item_layers)?))
    }
}

/// Backward pass through propagation and pooling: given gradients on the
/// pooled `(E_u, E_i)`, returns gradients on the layer-0 embeddings.
pub fn stack_backward(
    graph: &InteractionGraph,
    layers: usize,
    mode: CombineMode,
    grad_u: &Matrix,
    grad_i: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let scale = 1.0 / mode.divisor(layers)?;
    let mut gu = grad_u.clone();
    gu.scale(scale);
    let mut gi = grad_i.clone();
    gi.scale(scale);
    // Horner-style accumulation: g^(l) = s·G + Pᵀ g^(l+1), starting at l = L.
    let mut acc_u = gu.clone();
    let mut acc_i = gi.clone();
    for _ in 0..layers {
        let (bu, bi) = graph.propagate_backward(&acc_u, &acc_i)?;
        acc_u = bu;
        acc_u.add_scaled(&gu, 1.0)?;
        acc_i = bi;
        acc_i.add_scaled(&gi, 1.0)?;
    }
    Ok((acc_u, acc_i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn set(pairs: &[(usize, usize)]) -> InteractionSet {
        InteractionSet::from_id_pairs(pairs.iter().map(|(u, i)| (format!("u{u}"), format!("i{i}"))))
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_edge_norm_and_swap() {
        let g = InteractionGraph::build(&set(&[(0, 0)]));
        assert_eq!(g.user_weights(0), &[1.0]);
        let (nu, ni) = g.propagate(&m(&[&[2.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(nu.as_slice(), &[1.0]);
        assert_eq!(ni.as_slice(), &[2.0]);
        let (bu, bi) = g.propagate_backward(&m(&[&[2.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(bu.as_slice(), &[1.0]);
        assert_eq!(bi.as_slice(), &[2.0]);
    }

    #[test]
    fn two_by_two_norms_and_propagation() {
        // u0–{i0, i1}, u1–{i0}
        let g = InteractionGraph::build(&set(&[(0, 0), (0, 1), (1, 0)]));
        assert_eq!(g.user_neighbors(0), &[0, 1]);
        let w = g.user_weights(0);
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // u1 has degree 1 and i0 degree 2.
        assert!((g.user_weights(1)[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        let (nu, ni) = g.propagate(&m(&[&[2.0], &[4.0]]), &m(&[&[1.0], &[3.0]])).unwrap();
        assert!((nu.get(0, 0) - (0.5 + 3.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((nu.get(0, 0) - 2.6213).abs() < 1e-4);
        assert!((ni.get(0, 0) - (0.5 * 2.0 + 4.0 / 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn zero_in_zero_out_and_shape_errors() {
        let g = InteractionGraph::build(&set(&[(0, 0), (0, 1), (1, 0)]));
        let (nu, ni) = g.propagate(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap();
        assert!(nu.as_slice().iter().chain(ni.as_slice()).all(|&x| x == 0.0));
        assert!(g.propagate(&Matrix::zeros(3, 3), &Matrix::zeros(2, 3)).is_err());
        assert!(g.propagate(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn transposes_agree_with_dense_oracle() {
        let mut rng = SplitMix64::new(17);
        let mut pairs = std::collections::BTreeSet::new();
        while pairs.len() < 100 {
            pairs.insert((rng.below_usize(25), rng.below_usize(20)));
        }
        let pairs: Vec<_> = pairs.into_iter().collect();
        let s = set(&pairs);
        let g = InteractionGraph::build(&s);
        let mut dense = vec![vec![false; s.n_items()]; s.n_users()];
        for &(u, i) in s.pairs() {
            dense[u][i] = true;
        }
        for u in 0..s.n_users() {
            for i in 0..s.n_items() {
                assert_eq!(g.user_neighbors(u).contains(&i), dense[u][i]);
                assert_eq!(g.item_neighbors(i).contains(&u), dense[u][i]);
            }
        }
        assert_eq!(g.n_edges(), 100);
    }

    #[test]
    fn combine_modes() {
        let v = m(&[&[1.5, -2.0]]);
        let stack = LayerStack {
            user_layers: vec![v.clone(), v.clone(), v.clone()],
            item_layers: vec![v.clone(), v.clone(), v.clone()],
        };
        let (eu, ei) = stack.combine(CombineMode::Mean).unwrap();
        assert_eq!(eu, v);
        assert_eq!(ei, v);

        let stack = LayerStack {
            user_layers: vec![m(&[&[0.0]]), m(&[&[2.0]])],
            item_layers: vec![m(&[&[0.0]]), m(&[&[2.0]])],
        };
        assert_eq!(stack.combine(CombineMode::Mean).unwrap().0.as_slice(), &[1.0]);
        assert_eq!(stack.combine(CombineMode::DivideByL).unwrap().0.as_slice(), &[2.0]);

        let single = LayerStack {
            user_layers: vec![v.clone()],
            item_layers: vec![v.clone()],
        };
        assert_eq!(single.combine(CombineMode::Mean).unwrap().0, v);
        assert!(single.combine(CombineMode::DivideByL).is_err());
    }

    #[test]
    fn combine_matches_elementwise_average() {
        let mut rng = SplitMix64::new(5);
        let layers: Vec<Matrix> = (0..4).map(|_| Matrix::glorot(3, 2, 1, 1, &mut rng)).collect();
        let stack = LayerStack {
            user_layers: layers.clone(),
            item_layers: layers.clone(),
        };
        let (eu, _) = stack.combine(CombineMode::Mean).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let avg = layers.iter().map(|l| l.get(r, c)).sum::<f64>() / 4.0;
                assert!((eu.get(r, c) - avg).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn combine_mode_names() {
        assert_eq!("mean_Lplus1".parse::<CombineMode>().unwrap(), CombineMode::Mean);
        assert_eq!("paper_literal_L".parse::<CombineMode>().unwrap(), CombineMode::DivideByL);
        assert!("max".parse::<CombineMode>().is_err());
    }
}
