//! BPR training with uniform negative sampling, AdamW and early stopping on
//! validation NDCG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{evaluate_validation, DEFAULT_K};
use crate::graph::InteractionGraph;
use crate::model::{backward, forward, Embeddings, ModelCheckpoint, ModelParams, TextInput, VariantSpec};
use crate::numerics::{add_l2_penalty, dot, sigmoid, softplus, AdamW, Matrix, RegMode};
use crate::config::{is_non_negative, is_positive};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// One triple per training edge in shuffled order, each with a negative
/// drawn uniformly (by rejection) from the items the user has no training
/// interaction with. Deterministic in `(seed, epoch)`. Users who interacted
/// with every item contribute no triples.
pub fn sample_epoch(graph: &InteractionGraph, seed: u64, epoch: u64) -> Vec<BprTriple> {
    let mut rng = SplitMix64::for_stream(seed, epoch);
    let mut edges: Vec<(usize, usize)> = (0..graph.n_users())
        .flat_map(|u| graph.user_neighbors(u).iter().map(move |&i| (u, i)))
        .collect();
    rng.shuffle(&mut edges);
    let n_items = graph.n_items();
    let mut out = Vec::with_capacity(edges.len());
    let mut saturated = 0usize;
    for (user, pos) in edges {
        if graph.user_neighbors(user).len() >= n_items {
            saturated += 1;
            continue;
        }
        let neg = loop {
            let j = rng.below_usize(n_items);
            if !graph.has_edge(user, j) {
                break j;
            }
        };
        out.push(BprTriple { user, pos, neg });
    }
    if saturated > 0 {
        log::warn!("skipped {saturated} training pairs of users who interacted with every item");
    }
    out
}

/// `−Σ ln σ(pos − neg) = Σ softplus(neg − pos)`.
pub fn bpr_loss(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.len() != neg_scores.len() {
        return Err(Error::Shape(format!(
            "bpr_loss: {} positive vs {} negative scores",
            pos_scores.len(),
            neg_scores.len()
        )));
    }
    Ok(pos_scores.iter().zip(neg_scores).map(|(p, n)| softplus(n - p)).sum())
}

/// BPR loss over `triples` and its gradient on the final embeddings.
pub fn bpr_loss_and_grad(emb: &Embeddings, triples: &[BprTriple]) -> (f64, Matrix, Matrix) {
    let d = emb.users.cols();
    let mut gu = Matrix::zeros(emb.users.rows(), d);
    let mut gi = Matrix::zeros(emb.items.rows(), d);
    let mut loss = 0.0;
    for t in triples {
        let eu = emb.users.row(t.user);
        let ep = emb.items.row(t.pos);
        let en = emb.items.row(t.neg);
        let diff = dot(eu, ep) - dot(eu, en);
        loss += softplus(-diff);
        // d softplus(−x)/dx = −σ(−x)
        let g = -sigmoid(-diff);
        for c in 0..d {
            gu.row_mut(t.user)[c] += g * (ep[c] - en[c]);
            gi.row_mut(t.pos)[c] += g * eu[c];
            gi.row_mut(t.neg)[c] -= g * eu[c];
        }
    }
    (loss, gu, gi)
}

/// Full objective for one batch: BPR plus the loss-side L2 penalty, with the
/// gradient on every parameter block.
pub fn batch_objective(
    graph: &InteractionGraph,
    params: &ModelParams,
    variant: &VariantSpec,
    triples: &[BprTriple],
    penalty: f64,
) -> Result<(f64, ModelParams)> {
    let (emb, cache) = forward(graph, params, variant)?;
    let (loss, gu, gi) = bpr_loss_and_grad(&emb, triples);
    let mut grads = backward(graph, params, variant, &cache, &gu, &gi)?;
    let reg = add_l2_penalty(params, &mut grads, penalty)?;
    Ok((loss + reg, grads))
}

/// Loss of [`batch_objective`] without gradients.
pub fn batch_loss(
    graph: &InteractionGraph,
    params: &ModelParams,
    variant: &VariantSpec,
    triples: &[BprTriple],
    penalty: f64,
) -> Result<f64> {
    use crate::numerics::ParamSet;
    let (emb, _) = forward(graph, params, variant)?;
    let (pos, neg): (Vec<f64>, Vec<f64>) = triples
        .iter()
        .map(|t| {
            let eu = emb.users.row(t.user);
            (dot(eu, emb.items.row(t.pos)), dot(eu, emb.items.row(t.neg)))
        })
        .unzip();
    Ok(bpr_loss(&pos, &neg)? + penalty * params.sum_squares())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: VariantSpec,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub reg_mode: RegMode,
    /// Width of randomly initialised tables; text-initialised items use the
    /// width of the condensed embeddings instead.
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: VariantSpec::default(),
            lr: 1e-3,
            weight_decay: 1e-3,
            batch_size: 1024,
            max_epochs: 1000,
            eval_every: 10,
            patience: 100,
            seed: 2024,
            reg_mode: RegMode::Decoupled,
            dim: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        if !is_positive(self.lr) || !is_non_negative(self.weight_decay) || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::Config("lr, batch_size and dim must be positive, weight_decay non-negative".into()));
        }
        if self.eval_every == 0 || self.patience == 0 || !self.patience.is_multiple_of(self.eval_every) {
            return Err(Error::Config(format!(
                "eval_every ({}) must be positive and divide patience ({})",
                self.eval_every, self.patience
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    /// Mean BPR loss per training triple, without the penalty term.
    pub loss: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters, or the final ones if no validation ran.
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<LogEntry>,
    pub best_epoch: Option<usize>,
    pub best_val_ndcg: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Training aborted on a non-finite loss or gradient.
#[derive(Debug, thiserror::Error)]
#[error("training aborted at epoch {epoch}: {source}")]
pub struct TrainFailure {
    pub epoch: usize,
    #[source]
    pub source: Error,
    pub last_good: ModelCheckpoint,
    pub log: Vec<LogEntry>,
}

/// Trains a model on `split.train`.
///
/// `text` supplies item rows aligned with the split's item indices: the
/// condensed embeddings for text-initialised variants, the raw ones for the
/// projected variant. Every `eval_every` epochs the model is scored on the
/// validation part (NDCG@20, train interactions masked); the best
/// parameters are kept and training stops once `patience` epochs pass
/// without strict improvement.
pub fn train(split: &DatasetSplit, text: Option<&Matrix>, config: &TrainConfig) -> Result<TrainOutcome, Box<TrainFailure>> {
    let fail0 = |source: Error| {
        Box::new(TrainFailure {
            epoch: 0,
            source,
            last_good: ModelCheckpoint {
                variant: config.variant,
                params: ModelParams::default(),
            },
            log: Vec::new(),
        })
    };
    config.validate().map_err(fail0)?;
    let variant = config.variant;
    let text = match variant.text_input() {
        TextInput::None => None,
        _ => Some(text.ok_or_else(|| {
            fail0(Error::Config(format!(
                "variant {} needs {} text embeddings",
                variant.descriptor(),
                if variant.text_input() == TextInput::Raw { "raw" } else { "condensed" }
            )))
        })?),
    };
    if split.train.is_empty() {
        return Err(fail0(Error::NoInteractions));
    }
    let graph = InteractionGraph::build(&split.train);
    let mut params = ModelParams::init(&variant, split.n_users(), split.n_items(), config.dim, text, config.seed)
        .map_err(fail0)?;
    let mut opt = AdamW::new(config.reg_mode.adamw(config.lr, config.weight_decay));
    let penalty = config.reg_mode.penalty(config.weight_decay);
    let can_validate = !split.validation.is_empty();
    if !can_validate && config.max_epochs > 0 {
        log::warn!("validation split is empty; training runs for max_epochs without early stopping");
    }

    let mut log_entries: Vec<LogEntry> = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        let fail = |source: Error, best: &Option<(usize, f64, ModelParams)>, params: &ModelParams, log: &[LogEntry]| {
            Box::new(TrainFailure {
                epoch,
                source,
                last_good: ModelCheckpoint {
                    variant,
                    params: best.as_ref().map_or_else(|| params.clone(), |b| b.2.clone()),
                },
                log: log.to_vec(),
            })
        };
        let triples = sample_epoch(&graph, config.seed, epoch as u64);
        let mut total = 0.0;
        for batch in triples.chunks(config.batch_size) {
            let (loss, grads) = batch_objective(&graph, &params, &variant, batch, penalty)
                .map_err(|e| fail(e, &best, &params, &log_entries))?;
            if !loss.is_finite() {
                return Err(fail(
                    Error::NonFinite(format!("BPR loss at epoch {epoch}")),
                    &best,
                    &params,
                    &log_entries,
                ));
            }
            total += loss - penalty * crate::numerics::ParamSet::sum_squares(&params);
            let snapshot = params.clone();
            opt.step(&mut params, &grads).map_err(|e| fail(e, &best, &snapshot, &log_entries))?;
        }
        epochs_run = epoch;
        let mut entry = LogEntry {
            epoch,
            loss: total / triples.len().max(1) as f64,
            val_recall: None,
            val_ndcg: None,
        };

        if can_validate && epoch % config.eval_every == 0 {
            let (emb, _) = forward(&graph, &params, &variant).map_err(|e| fail(e, &best, &params, &log_entries))?;
            let res = evaluate_validation(&emb, split, DEFAULT_K).map_err(|e| fail(e, &best, &params, &log_entries))?;
            entry.val_recall = Some(res.mean_recall);
            entry.val_ndcg = Some(res.mean_ndcg);
            log::info!(
                "epoch {epoch}: loss {:.5} val recall@{DEFAULT_K} {:.4} ndcg@{DEFAULT_K} {:.4}",
                entry.loss,
                res.mean_recall,
                res.mean_ndcg
            );
            if best.as_ref().is_none_or(|b| res.mean_ndcg > b.1) {
                best = Some((epoch, res.mean_ndcg, params.clone()));
            }
        }
        log_entries.push(entry);
        if let Some((best_epoch, _, _)) = &best {
            if epoch - best_epoch >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_val_ndcg, final_params) = match best {
        Some((e, v, p)) => (Some(e), Some(v), p),
        None => (None, None, params),
    };
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            variant,
            params: final_params,
        },
        log: log_entries,
        best_epoch,
        best_val_ndcg,
        epochs_run,
        stopped_early,
    })
}

/// `epoch<TAB>loss<TAB>val_recall20<TAB>val_ndcg20`, metric columns empty on
/// epochs without validation.
pub fn format_log(log: &[LogEntry]) -> String {
    let mut out = String::from("epoch\tloss\tval_recall20\tval_ndcg20\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in log {
        writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.loss, opt(e.val_recall), opt(e.val_ndcg)).expect("write to String");
    }
    out
}

pub fn write_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    fs::write(path, format_log(log)).map_err(|e| Error::io(path, e))
}
