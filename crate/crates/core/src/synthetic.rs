//! Seeded synthetic data: Gaussian stand-ins for text embeddings and a
//! planted block-structured interaction fixture for end-to-end checks.

use std::collections::BTreeSet;

use crate::dataset::InteractionSet;
use crate::embfile::ItemEmbeddings;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::SplitMix64;

fn gaussian(rng: &mut SplitMix64) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `n_items × dim` standard-normal rows scaled to unit norm, with ids
/// `item0..`.
pub fn synth_embeddings(n_items: usize, dim: usize, seed: u64) -> Result<ItemEmbeddings> {
    if n_items == 0 || dim == 0 {
        return Err(Error::EmptyInput("synthetic embedding shape"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut m = Matrix::zeros(n_items, dim);
    for r in 0..n_items {
        let row = m.row_mut(r);
        row.iter_mut().for_each(|x| *x = gaussian(&mut rng));
        normalize(row);
    }
    ItemEmbeddings::new((0..n_items).map(|i| format!("item{i}")).collect(), m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub blocks: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction stays inside the user's block.
    pub within_block: f64,
    pub text_dim: usize,
    /// Weight of the per-item noise relative to the unit block centroid in
    /// the text embeddings.
    pub text_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 100,
            blocks: 4,
            interactions_per_user: 8,
            within_block: 0.9,
            text_dim: 32,
            text_noise: 0.5,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub interactions: InteractionSet,
    /// Unit-norm rows aligned with `interactions.item_ids()`.
    pub text: ItemEmbeddings,
    pub user_block: Vec<usize>,
    pub item_block: Vec<usize>,
}

/// Users and items are assigned round-robin to blocks. Each interaction
/// picks the user's own block with probability `within_block`, otherwise a
/// uniformly chosen other block, and then a uniform unseen item from it.
/// Item text is the block centroid plus Gaussian noise, normalised.
pub fn planted_blocks(cfg: &PlantedConfig) -> Result<PlantedData> {
    if cfg.blocks < 2 || cfg.n_items < cfg.blocks || cfg.n_users == 0 || cfg.text_dim == 0 {
        return Err(Error::Config(format!("degenerate planted configuration {cfg:?}")));
    }
    if !(0.0..=1.0).contains(&cfg.within_block) {
        return Err(Error::Config("within_block must lie in [0, 1]".into()));
    }
    let per_block = cfg.n_items / cfg.blocks;
    if cfg.interactions_per_user > per_block {
        return Err(Error::Config("interactions_per_user exceeds block size".into()));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let item_block: Vec<usize> = (0..cfg.n_items).map(|i| i % cfg.blocks).collect();
    let user_block: Vec<usize> = (0..cfg.n_users).map(|u| u % cfg.blocks).collect();
    let members: Vec<Vec<usize>> = (0..cfg.blocks)
        .map(|b| (0..cfg.n_items).filter(|&i| item_block[i] == b).collect())
        .collect();

    let mut pairs = Vec::with_capacity(cfg.n_users * cfg.interactions_per_user);
    for (u, &home) in user_block.iter().enumerate() {
        let mut seen = BTreeSet::new();
        while seen.len() < cfg.interactions_per_user {
            let b = if rng.next_f64() < cfg.within_block {
                home
            } else {
                (home + 1 + rng.below_usize(cfg.blocks - 1)) % cfg.blocks
            };
            let item = members[b][rng.below_usize(members[b].len())];
            if seen.insert(item) {
                pairs.push((u, item));
            }
        }
    }
    let user_ids = (0..cfg.n_users).map(|u| format!("user{u}")).collect();
    let item_ids: Vec<String> = (0..cfg.n_items).map(|i| format!("item{i}")).collect();
    let interactions = InteractionSet::new(user_ids, item_ids.clone(), pairs)?;

    let centroids: Vec<Vec<f64>> = (0..cfg.blocks)
        .map(|_| {
            let mut c: Vec<f64> = (0..cfg.text_dim).map(|_| gaussian(&mut rng)).collect();
            normalize(&mut c);
            c
        })
        .collect();
    let scale = cfg.text_noise / (cfg.text_dim as f64).sqrt();
    let mut text = Matrix::zeros(cfg.n_items, cfg.text_dim);
    for i in 0..cfg.n_items {
        let row = text.row_mut(i);
        for (x, c) in row.iter_mut().zip(&centroids[item_block[i]]) {
            *x = c + scale * gaussian(&mut rng);
        }
        normalize(row);
    }
    Ok(PlantedData {
        interactions,
        text: ItemEmbeddings::new(item_ids, text)?,
        user_block,
        item_block,
    })
}
