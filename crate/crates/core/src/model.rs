//! Preference model: attentive user initialisation, light graph
//! convolution, layer pooling and inner-product scoring, with the ablation
//! variants and the MF-BPR / LightGCN baselines expressed as configurations.
//!
//! For the full model the trainable state is the item table `e_i^(0)` and
//! the `K` attention vectors `a_k`. A user's layer-0 embedding is
//!
//! ```text
//! α_{u,k}^i = softmax_{i ∈ N(u)}(a_kᵀ e_i^(0))
//! e_u^(0)   = LayerNorm( (1/K) Σ_k Σ_{i ∈ N(u)} α_{u,k}^i e_i^(0) )
//! ```
//!
//! with no linear transformation anywhere in the attention.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::checkpoint::ParamFile;
use crate::error::{Error, Result};
use crate::graph::{stack_backward, CombineMode, InteractionGraph, LayerStack};
use crate::numerics::{dot, layer_norm, layer_norm_backward, softmax_stable, Matrix, ParamSet, LN_EPS};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    Agtm,
    MfBpr,
    LightGcn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Agtm => "agtm",
            ModelKind::MfBpr => "mf_bpr",
            ModelKind::LightGcn => "lightgcn",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agtm" => Ok(Self::Agtm),
            "mf_bpr" | "mf" => Ok(Self::MfBpr),
            "lightgcn" => Ok(Self::LightGcn),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Components removed from the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablations {
    /// Randomly initialised item table instead of condensed text embeddings.
    pub no_tcm: bool,
    /// Trainable user id table instead of attentive initialisation.
    pub no_aaum: bool,
    /// No attention and no propagation: scores from the layer-0 tables.
    pub no_ipm: bool,
    /// Item layer 0 is `W·x_i` with `W` and raw `x_i` trained jointly.
    pub no_ae: bool,
}

impl Ablations {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn names(&self) -> Vec<&'static str> {
        [
            (self.no_tcm, "no_tcm"),
            (self.no_aaum, "no_aaum"),
            (self.no_ipm, "no_ipm"),
            (self.no_ae, "no_ae"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect()
    }
}

impl fmt::Display for Ablations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(","))
    }
}

impl FromStr for Ablations {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut a = Ablations::default();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "no_tcm" => a.no_tcm = true,
                "no_aaum" => a.no_aaum = true,
                "no_ipm" => a.no_ipm = true,
                "no_ae" => a.no_ae = true,
                other => return Err(Error::Config(format!("unknown ablation {other:?}"))),
            }
        }
        Ok(a)
    }
}

/// Where item layer-0 embeddings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemSource {
    /// Trainable table initialised from condensed text embeddings.
    Condensed,
    /// Trainable table with random initialisation.
    Random,
    /// `W·x_i` over trainable raw text embeddings.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserSource {
    Attention,
    IdTable,
}

/// Which text input a variant needs, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextInput {
    None,
    Condensed,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub model: ModelKind,
    pub ablations: Ablations,
    pub layers: usize,
    pub heads: usize,
    pub combine_mode: CombineMode,
}

impl Default for VariantSpec {
    fn default() -> Self {
        Self {
            model: ModelKind::Agtm,
            ablations: Ablations::default(),
            layers: 3,
            heads: 4,
            combine_mode: CombineMode::Mean,
        }
    }
}

impl VariantSpec {
    pub fn agtm(layers: usize, heads: usize) -> Self {
        Self {
            layers,
            heads,
            ..Self::default()
        }
    }

    pub fn with_ablations(mut self, ablations: Ablations) -> Self {
        self.ablations = ablations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.ablations;
        if self.model != ModelKind::Agtm && !a.is_empty() {
            return Err(Error::Config(format!(
                "ablations apply to model=agtm only, got model={} ablations={a}",
                self.model.as_str()
            )));
        }
        if a.no_ae && a.no_tcm {
            return Err(Error::Config("no_ae and no_tcm cannot be combined".into()));
        }
        if self.user_source() == UserSource::Attention && self.heads == 0 {
            return Err(Error::Config("attention needs heads >= 1".into()));
        }
        if self.propagates() {
            self.combine_mode.divisor(self.layers)?;
        }
        Ok(())
    }

    pub fn item_source(&self) -> ItemSource {
        match self.model {
            ModelKind::MfBpr | ModelKind::LightGcn => ItemSource::Random,
            ModelKind::Agtm if self.ablations.no_ae => ItemSource::Projected,
            ModelKind::Agtm if self.ablations.no_tcm => ItemSource::Random,
            ModelKind::Agtm => ItemSource::Condensed,
        }
    }

    pub fn user_source(&self) -> UserSource {
        match self.model {
            ModelKind::MfBpr | ModelKind::LightGcn => UserSource::IdTable,
            ModelKind::Agtm if self.ablations.no_aaum || self.ablations.no_ipm => UserSource::IdTable,
            ModelKind::Agtm => UserSource::Attention,
        }
    }

    /// Whether layer embeddings go through propagation and pooling.
    pub fn propagates(&self) -> bool {
        match self.model {
            ModelKind::MfBpr => false,
            ModelKind::LightGcn => true,
            ModelKind::Agtm => !self.ablations.no_ipm,
        }
    }

    pub fn text_input(&self) -> TextInput {
        match self.item_source() {
            ItemSource::Condensed => TextInput::Condensed,
            ItemSource::Projected => TextInput::Raw,
            ItemSource::Random => TextInput::None,
        }
    }

    /// `model=..;ablations=..;layers=..;heads=..;combine_mode=..`
    pub fn descriptor(&self) -> String {
        format!(
            "model={};ablations={};layers={};heads={};combine_mode={}",
            self.model.as_str(),
            self.ablations,
            self.layers,
            self.heads,
            self.combine_mode.as_str()
        )
    }

    pub fn from_descriptor(s: &str) -> Result<Self> {
        let mut v = VariantSpec::default();
        for field in s.split(';').filter(|f| !f.is_empty()) {
            let (k, val) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad variant field {field:?}")))?;
            let num = |x: &str| x.parse::<usize>().map_err(|_| Error::Format(format!("bad {k} {x:?}")));
            match k {
                "model" => v.model = val.parse()?,
                "ablations" => v.ablations = val.parse()?,
                "layers" => v.layers = num(val)?,
                "heads" => v.heads = num(val)?,
                "combine_mode" => v.combine_mode = val.parse()?,
                other => return Err(Error::Format(format!("unknown variant field {other:?}"))),
            }
        }
        v.validate()?;
        Ok(v)
    }
}

/// Trainable parameters. Only the blocks the active variant uses are present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    /// `n_items × d` item layer-0 table.
    pub item_emb: Option<Matrix>,
    /// `n_items × d_o` raw text embeddings (projected variant).
    pub raw_x: Option<Matrix>,
    /// `d × d_o` projection (projected variant).
    pub proj_w: Option<Matrix>,
    /// `K × d` attention vectors, one per row.
    pub attn: Option<Matrix>,
    /// `n_users × d` user layer-0 table.
    pub user_emb: Option<Matrix>,
}

pub const MODEL_BLOCK_NAMES: [&str; 5] = ["item_emb", "raw_x", "proj_w", "attn", "user_emb"];

impl ParamSet for ModelParams {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        [
            ("item_emb", &self.item_emb),
            ("raw_x", &self.raw_x),
            ("proj_w", &self.proj_w),
            ("attn", &self.attn),
            ("user_emb", &self.user_emb),
        ]
        .into_iter()
        .filter_map(|(n, m)| m.as_ref().map(|m| (n, m)))
        .collect()
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        [
            ("item_emb", &mut self.item_emb),
            ("raw_x", &mut self.raw_x),
            ("proj_w", &mut self.proj_w),
            ("attn", &mut self.attn),
            ("user_emb", &mut self.user_emb),
        ]
        .into_iter()
        .filter_map(|(n, m)| m.as_mut().map(|m| (n, m)))
        .collect()
    }
}

impl ModelParams {
    /// Seeded initialisation for `variant`.
    ///
    /// `text` must be the condensed `n_items × d` matrix for the condensed
    /// item source (its width overrides `dim`) and the raw `n_items × d_o`
    /// matrix for the projected one; it is ignored otherwise.
    pub fn init(
        variant: &VariantSpec,
        n_users: usize,
        n_items: usize,
        dim: usize,
        text: Option<&Matrix>,
        seed: u64,
    ) -> Result<Self> {
        variant.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut p = ModelParams::default();
        let need_text = |what: &str| -> Result<&Matrix> {
            let t = text.ok_or_else(|| Error::Config(format!("variant {} needs {what}", variant.descriptor())))?;
            if t.rows() != n_items {
                return Err(Error::Shape(format!("{what} has {} rows for {n_items} items", t.rows())));
            }
            Ok(t)
        };
        let dim = match variant.item_source() {
            ItemSource::Condensed => {
                let c = need_text("condensed text embeddings")?;
                p.item_emb = Some(c.clone());
                c.cols()
            }
            ItemSource::Random => {
                p.item_emb = Some(Matrix::glorot(n_items, dim, n_items, dim, &mut rng));
                dim
            }
            ItemSource::Projected => {
                let x = need_text("raw text embeddings")?;
                p.raw_x = Some(x.clone());
                p.proj_w = Some(Matrix::glorot(dim, x.cols(), x.cols(), dim, &mut rng));
                dim
            }
        };
        if dim < 2 && variant.user_source() == UserSource::Attention {
            return Err(Error::Config("layer normalisation needs embedding dimension >= 2".into()));
        }
        match variant.user_source() {
            UserSource::Attention => p.attn = Some(Matrix::glorot(variant.heads, dim, dim, 1, &mut rng)),
            UserSource::IdTable => p.user_emb = Some(Matrix::glorot(n_users, dim, n_users, dim, &mut rng)),
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Option<Matrix>| m.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols()));
        Self {
            item_emb: z(&self.item_emb),
            raw_x: z(&self.raw_x),
            proj_w: z(&self.proj_w),
            attn: z(&self.attn),
            user_emb: z(&self.user_emb),
        }
    }

    /// Checks that exactly the blocks `variant` needs are present.
    pub fn check_variant(&self, variant: &VariantSpec) -> Result<()> {
        let want = [
            matches!(variant.item_source(), ItemSource::Condensed | ItemSource::Random),
            variant.item_source() == ItemSource::Projected,
            variant.item_source() == ItemSource::Projected,
            variant.user_source() == UserSource::Attention,
            variant.user_source() == UserSource::IdTable,
        ];
        let have = [
            self.item_emb.is_some(),
            self.raw_x.is_some(),
            self.proj_w.is_some(),
            self.attn.is_some(),
            self.user_emb.is_some(),
        ];
        for ((name, w), h) in MODEL_BLOCK_NAMES.iter().zip(want).zip(have) {
            if w != h {
                return Err(Error::Config(format!(
                    "parameter block {name} {} for variant {}",
                    if w { "missing" } else { "unexpected" },
                    variant.descriptor()
                )));
            }
        }
        Ok(())
    }

    /// Item layer-0 embeddings.
    pub fn item_layer0(&self) -> Result<Matrix> {
        if let Some(e) = &self.item_emb {
            return Ok(e.clone());
        }
        match (&self.raw_x, &self.proj_w) {
            (Some(x), Some(w)) => {
                if x.cols() != w.cols() {
                    return Err(Error::Shape("raw_x and proj_w disagree on d_o".into()));
                }
                let mut out = Matrix::zeros(x.rows(), w.rows());
                for r in 0..x.rows() {
                    let row = w.matvec(x.row(r))?;
                    out.row_mut(r).copy_from_slice(&row);
                }
                Ok(out)
            }
            _ => Err(Error::Config("no item embedding source in parameters".into())),
        }
    }
}

/// Attention state kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    pub heads: usize,
    /// `alpha[k * n_edges + e]` for head `k` and user-major edge `e`.
    pub alpha: Vec<f64>,
    /// Pooled user vectors before layer normalisation.
    pub pooled: Matrix,
}

impl AttentionCache {
    /// Coefficients of head `k` over user `u`'s neighbours.
    pub fn user_alpha<'a>(&'a self, graph: &InteractionGraph, u: usize, k: usize) -> &'a [f64] {
        let n_edges = graph.n_edges();
        let start = k * n_edges + graph.user_edge_offset(u);
        &self.alpha[start..start + graph.user_neighbors(u).len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub item0: Matrix,
    pub attention: Option<AttentionCache>,
    pub stack: Option<LayerStack>,
}

/// Output of [`forward`]: final user and item embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub users: Matrix,
    pub items: Matrix,
}

/// Per-head coefficients, pooled vector and normalised vector of one user.
type UserAttention = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

/// Attentive user initialisation over `graph` from item layer-0 embeddings.
pub fn user_init_attention(graph: &InteractionGraph, item0: &Matrix, attn: &Matrix) -> Result<(Matrix, AttentionCache)> {
    let d = item0.cols();
    if attn.cols() != d || item0.rows() != graph.n_items() {
        return Err(Error::Shape(format!(
            "attention: item table {:?}, attention vectors {:?}",
            item0.shape(),
            attn.shape()
        )));
    }
    let heads = attn.rows();
    if heads == 0 {
        return Err(Error::Config("attention needs at least one head".into()));
    }
    let per_user: Vec<UserAttention> = (0..graph.n_users())
        .into_par_iter()
        .map(|u| {
            let nbrs = graph.user_neighbors(u);
            if nbrs.is_empty() {
                return Err(Error::Invalid(format!("user {u} has no training interactions")));
            }
            let mut pooled = vec![0.0; d];
            let mut alphas = Vec::with_capacity(heads);
            for k in 0..heads {
                let a = attn.row(k);
                let logits: Vec<f64> = nbrs.iter().map(|&i| dot(a, item0.row(i))).collect();
                let alpha = softmax_stable(&logits)?;
                for (&i, &w) in nbrs.iter().zip(&alpha) {
                    for (p, e) in pooled.iter_mut().zip(item0.row(i)) {
                        *p += w * e;
                    }
                }
                alphas.push(alpha);
            }
            pooled.iter_mut().for_each(|p| *p /= heads as f64);
            let normed = layer_norm(&pooled, LN_EPS)?;
            Ok((alphas, pooled, normed))
        })
        .collect::<Result<_>>()?;

    let n_edges = graph.n_edges();
    let mut alpha = vec![0.0; heads * n_edges];
    let mut pooled = Matrix::zeros(graph.n_users(), d);
    let mut user0 = Matrix::zeros(graph.n_users(), d);
    for (u, (alphas, p, n)) in per_user.into_iter().enumerate() {
        let off = graph.user_edge_offset(u);
        for (k, a) in alphas.iter().enumerate() {
            alpha[k * n_edges + off..k * n_edges + off + a.len()].copy_from_slice(a);
        }
        pooled.row_mut(u).copy_from_slice(&p);
        user0.row_mut(u).copy_from_slice(&n);
    }
    Ok((user0, AttentionCache { heads, alpha, pooled }))
}

/// Backward pass of [`user_init_attention`]: returns gradients on the item
/// layer-0 table and the attention vectors.
pub fn attention_backward(
    graph: &InteractionGraph,
    item0: &Matrix,
    attn: &Matrix,
    cache: &AttentionCache,
    grad_user0: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let d = item0.cols();
    let heads = cache.heads;
    if grad_user0.shape() != (graph.n_users(), d) || attn.shape() != (heads, d) {
        return Err(Error::Shape("attention backward: gradient or vector shape".into()));
    }
    let contributions: Vec<(Vec<f64>, Vec<f64>)> = (0..graph.n_users())
        .into_par_iter()
        .map(|u| {
            let nbrs = graph.user_neighbors(u);
            let mut g_items = vec![0.0; nbrs.len() * d];
            let mut g_attn = vec![0.0; heads * d];
            let g_out = grad_user0.row(u);
            if g_out.iter().all(|&g| g == 0.0) {
                return Ok((g_items, g_attn));
            }
            let g_pooled = layer_norm_backward(cache.pooled.row(u), g_out, LN_EPS)?;
            let g_head: Vec<f64> = g_pooled.iter().map(|g| g / heads as f64).collect();
            for k in 0..heads {
                let alpha = cache.user_alpha(graph, u, k);
                // dL/dα_i = g_head · e_i
                let g_alpha: Vec<f64> = nbrs.iter().map(|&i| dot(&g_head, item0.row(i))).collect();
                let weighted = dot(alpha, &g_alpha);
                let a_k = attn.row(k);
                for (n, &i) in nbrs.iter().enumerate() {
                    let g_logit = alpha[n] * (g_alpha[n] - weighted);
                    let e = item0.row(i);
                    let gi = &mut g_items[n * d..(n + 1) * d];
                    for c in 0..d {
                        gi[c] += alpha[n] * g_head[c] + g_logit * a_k[c];
                        g_attn[k * d + c] += g_logit * e[c];
                    }
                }
            }
            Ok((g_items, g_attn))
        })
        .collect::<Result<_>>()?;

    let mut g_item0 = Matrix::zeros(item0.rows(), d);
    let mut g_attn = Matrix::zeros(heads, d);
    for (u, (gi, ga)) in contributions.into_iter().enumerate() {
        for (n, &i) in graph.user_neighbors(u).iter().enumerate() {
            for (t, s) in g_item0.row_mut(i).iter_mut().zip(&gi[n * d..(n + 1) * d]) {
                *t += s;
            }
        }
        for (t, s) in g_attn.as_mut_slice().iter_mut().zip(&ga) {
            *t += s;
        }
    }
    Ok((g_item0, g_attn))
}

pub fn forward(graph: &InteractionGraph, params: &ModelParams, variant: &VariantSpec) -> Result<(Embeddings, ForwardCache)> {
    variant.validate()?;
    params.check_variant(variant)?;
    let item0 = params.item_layer0()?;
    if item0.rows() != graph.n_items() {
        return Err(Error::Shape(format!(
            "{} item rows for a graph with {} items",
            item0.rows(),
            graph.n_items()
        )));
    }
    let (user0, attention) = match variant.user_source() {
        UserSource::Attention => {
            let attn = params.attn.as_ref().expect("checked by check_variant");
            let (u0, cache) = user_init_attention(graph, &item0, attn)?;
            (u0, Some(cache))
        }
        UserSource::IdTable => {
            let t = params.user_emb.as_ref().expect("checked by check_variant");
            if t.shape() != (graph.n_users(), item0.cols()) {
                return Err(Error::Shape(format!("user table {:?}", t.shape())));
            }
            (t.clone(), None)
        }
    };
    if variant.propagates() {
        let stack = LayerStack::propagate_from(graph, user0, item0.clone(), variant.layers)?;
        let (users, items) = stack.combine(variant.combine_mode)?;
        Ok((
            Embeddings { users, items },
            ForwardCache {
                item0,
                attention,
                stack: Some(stack),
            },
        ))
    } else {
        Ok((
            Embeddings {
                users: user0,
                items: item0.clone(),
            },
            ForwardCache {
                item0,
                attention,
                stack: None,
            },
        ))
    }
}

/// Gradients on every parameter block, given gradients on the final embeddings.
pub fn backward(
    graph: &InteractionGraph,
    params: &ModelParams,
    variant: &VariantSpec,
    cache: &ForwardCache,
    grad_users: &Matrix,
    grad_items: &Matrix,
) -> Result<ModelParams> {
    params.check_variant(variant)?;
    let (g_user0, mut g_item0) = if variant.propagates() {
        if cache.stack.is_none() {
            return Err(Error::Invalid("forward cache lacks the layer stack".into()));
        }
        stack_backward(graph, variant.layers, variant.combine_mode, grad_users, grad_items)?
    } else {
        (grad_users.clone(), grad_items.clone())
    };

    let mut grads = params.zeros_like();
    match variant.user_source() {
        UserSource::Attention => {
            let att = cache
                .attention
                .as_ref()
                .ok_or_else(|| Error::Invalid("forward cache lacks attention state".into()))?;
            let attn = params.attn.as_ref().expect("checked by check_variant");
            let (gi, ga) = attention_backward(graph, &cache.item0, attn, att, &g_user0)?;
            g_item0.add_scaled(&gi, 1.0)?;
            grads.attn = Some(ga);
        }
        UserSource::IdTable => grads.user_emb = Some(g_user0),
    }
    match variant.item_source() {
        ItemSource::Condensed | ItemSource::Random => grads.item_emb = Some(g_item0),
        ItemSource::Projected => {
            let x = params.raw_x.as_ref().expect("checked by check_variant");
            let w = params.proj_w.as_ref().expect("checked by check_variant");
            // item0 = X Wᵀ  ⇒  dW = G0ᵀ X,  dX = G0 W
            let mut gw = Matrix::zeros(w.rows(), w.cols());
            let mut gx = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                let g = g_item0.row(r);
                gw.add_outer(g, x.row(r));
                let gxr = w.matvec_t(g)?;
                gx.row_mut(r).copy_from_slice(&gxr);
            }
            grads.proj_w = Some(gw);
            grads.raw_x = Some(gx);
        }
    }
    Ok(grads)
}

/// Inner-product score `E_u[u] · E_i[i]`.
pub fn predict(emb: &Embeddings, u: usize, i: usize) -> Result<f64> {
    if u >= emb.users.rows() || i >= emb.items.rows() {
        return Err(Error::Invalid(format!(
            "predict({u}, {i}) out of range for {} users, {} items",
            emb.users.rows(),
            emb.items.rows()
        )));
    }
    Ok(dot(emb.users.row(u), emb.items.row(i)))
}

/// Trained parameters together with the variant that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub variant: VariantSpec,
    pub params: ModelParams,
}

impl ModelCheckpoint {
    pub fn to_param_file(&self) -> ParamFile {
        ParamFile {
            descriptor: self.variant.descriptor(),
            blocks: self
                .params
                .blocks()
                .into_iter()
                .map(|(n, m)| (n.to_string(), m.clone()))
                .collect(),
        }
    }

    pub fn from_param_file(file: ParamFile) -> Result<Self> {
        let variant = VariantSpec::from_descriptor(&file.descriptor)?;
        let mut params = ModelParams::default();
        for (name, m) in file.blocks {
            let slot = match name.as_str() {
                "item_emb" => &mut params.item_emb,
                "raw_x" => &mut params.raw_x,
                "proj_w" => &mut params.proj_w,
                "attn" => &mut params.attn,
                "user_emb" => &mut params.user_emb,
                other => return Err(Error::Format(format!("unknown parameter block {other:?}"))),
            };
            if slot.replace(m).is_some() {
                return Err(Error::Format(format!("duplicate parameter block {name:?}")));
            }
        }
        params.check_variant(&variant)?;
        Ok(Self { variant, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_param_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_param_file(ParamFile::load(path)?)
    }
}
