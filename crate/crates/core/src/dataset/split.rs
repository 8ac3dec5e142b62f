use super::{DatasetSplit, InteractionSet};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("split ratios must be non-negative: {self}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {self}")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.75,
            validation: 0.05,
            test: 0.20,
        }
    }
}

impl std::fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.train, self.validation, self.test)
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad ratios {s:?}")))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(Error::Config(format!("expected three ratios, got {s:?}"))),
        }
    }
}

/// Part sizes for `n` pairs: `round(n·train)`, then `round(n·validation)`
/// capped by what remains, then the rest.
pub(crate) fn part_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
    let n_val = ((n as f64 * ratios.validation).round() as usize).min(n - n_train);
    (n_train, n_val, n - n_train - n_val)
}

/// Seeded global random split.
///
/// All pairs are shuffled with [`SplitMix64`] seeded by `seed`, cut into
/// train / validation / test by [`part_sizes`], and validation or test pairs
/// whose user or item does not occur in train are dropped. Indices are then
/// re-densified over the entities present in train.
pub fn split(data: &InteractionSet, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    if data.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let (n_train, n_val, _) = part_sizes(order.len(), &ratios);

    let pairs = data.pairs();
    let mut in_train_user = vec![false; data.n_users()];
    let mut in_train_item = vec![false; data.n_items()];
    for &e in &order[..n_train] {
        let (u, i) = pairs[e];
        in_train_user[u] = true;
        in_train_item[i] = true;
    }

    let pick = |range: &[usize]| -> (Vec<(usize, usize)>, usize) {
        let mut kept = Vec::with_capacity(range.len());
        let mut dropped = 0;
        for &e in range {
            let (u, i) = pairs[e];
            if in_train_user[u] && in_train_item[i] {
                kept.push((u, i));
            } else {
                dropped += 1;
            }
        }
        (kept, dropped)
    };
    let train_pairs: Vec<(usize, usize)> = order[..n_train].iter().map(|&e| pairs[e]).collect();
    let (val_pairs, dropped_validation) = pick(&order[n_train..n_train + n_val]);
    let (test_pairs, dropped_test) = pick(&order[n_train + n_val..]);
    if dropped_validation + dropped_test > 0 {
        log::info!(
            "split dropped {dropped_validation} validation and {dropped_test} test pairs with cold-start users or items"
        );
    }

    let part = |p: Vec<(usize, usize)>| {
        InteractionSet {
            pairs: p,
            user_ids: data.user_ids().to_vec(),
            item_ids: data.item_ids().to_vec(),
        }
        .restrict(&in_train_user, &in_train_item)
    };
    Ok(DatasetSplit {
        train: part(train_pairs),
        validation: part(val_pairs),
        test: part(test_pairs),
        seed,
        ratios,
        dropped_validation,
        dropped_test,
    })
}
