//! Decoupled-weight-decay Adam.
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! m̂ = m / (1−β1^t),  v̂ = v / (1−β2^t)
//! θ ← θ − lr·(m̂ / (√v̂ + eps) + λ·θ)
//! ```

use crate::error::{Error, Result};

use super::Matrix;

/// A collection of named parameter blocks with a fixed iteration order.
///
/// Gradients use the same type as the parameters, so `grads.blocks()` lines
/// up with `params.blocks()` entry for entry.
pub trait ParamSet {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)>;
    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().copied())
            .collect()
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "assign_flat: {} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for (_, m) in self.blocks_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn sum_squares(&self) -> f64 {
        self.blocks().iter().map(|(_, m)| m.sum_squares()).sum()
    }
}

impl ParamSet for Matrix {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("param", self)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![("param", self)]
    }
}

/// How the L2 coefficient λ is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegMode {
    /// AdamW weight decay at rate λ; no penalty in the loss.
    #[default]
    Decoupled,
    /// `λ‖Θ‖²` added to the loss (gradient `2λΘ`) and the optimiser decay set to 0.
    LossTerm,
}

impl RegMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RegMode::Decoupled => "decoupled",
            RegMode::LossTerm => "loss_term",
        }
    }

    /// Optimiser settings for coefficient `lambda` under this mode.
    pub fn adamw(self, lr: f64, lambda: f64) -> AdamWConfig {
        match self {
            RegMode::Decoupled => AdamWConfig::new(lr, lambda),
            RegMode::LossTerm => AdamWConfig::new(lr, 0.0),
        }
    }

    /// Loss-side penalty coefficient.
    pub fn penalty(self, lambda: f64) -> f64 {
        match self {
            RegMode::Decoupled => 0.0,
            RegMode::LossTerm => lambda,
        }
    }
}

impl std::str::FromStr for RegMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoupled" | "adamw" => Ok(Self::Decoupled),
            "loss_term" => Ok(Self::LossTerm),
            other => Err(Error::Config(format!("unknown reg_mode {other:?}"))),
        }
    }
}

/// Adds `coef‖Θ‖²` to a loss and `2·coef·Θ` to its gradient. Returns the penalty.
pub fn add_l2_penalty<P: ParamSet>(params: &P, grads: &mut P, coef: f64) -> Result<f64> {
    if coef == 0.0 {
        return Ok(0.0);
    }
    for ((_, p), (name, g)) in params.blocks().into_iter().zip(grads.blocks_mut()) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("penalty: gradient shape for {name}")));
        }
        g.add_scaled(p, 2.0 * coef)?;
    }
    Ok(coef * params.sum_squares())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimiser state: one `(m, v)` buffer pair per parameter block.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step_count: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Gradients are validated before any parameter is
    /// touched, so an error leaves `params` and the state unchanged.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        let shapes: Vec<(usize, usize)> = params.blocks().iter().map(|(_, m)| m.shape()).collect();
        if grad_blocks.len() != shapes.len() {
            return Err(Error::Shape("AdamW: parameter/gradient block count".into()));
        }
        for ((name, g), shape) in grad_blocks.iter().zip(&shapes) {
            if g.shape() != *shape {
                return Err(Error::Shape(format!("AdamW: gradient shape for {name}")));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        if self.moments.is_empty() {
            self.moments = shapes
                .iter()
                .map(|(r, c)| (vec![0.0; r * c], vec![0.0; r * c]))
                .collect();
        } else if self.moments.len() != shapes.len()
            || self.moments.iter().zip(&shapes).any(|((m, _), (r, c))| m.len() != r * c)
        {
            return Err(Error::Shape("AdamW: state does not match parameters".into()));
        }

        self.step_count += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (((_, p), (_, g)), (m, v)) in params
            .blocks_mut()
            .into_iter()
            .zip(grad_blocks)
            .zip(self.moments.iter_mut())
        {
            for (((theta, &gi), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *theta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix {
        Matrix::from_vec(1, 1, vec![x]).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let before = p.clone();
        let mut opt = AdamW::new(AdamWConfig::new(1e-2, 0.0));
        for _ in 0..5 {
            opt.step(&mut p, &Matrix::zeros(2, 2)).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 on the first step, so θ = -lr / (1 + eps).
        let mut p = scalar(0.0);
        let mut opt = AdamW::new(AdamWConfig::new(1e-3, 0.0));
        opt.step(&mut p, &scalar(1.0)).unwrap();
        assert!((p.get(0, 0) + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn decay_only_step() {
        let mut p = scalar(1.0);
        let mut opt = AdamW::new(AdamWConfig::new(1e-3, 0.01));
        opt.step(&mut p, &scalar(0.0)).unwrap();
        assert!((p.get(0, 0) - (1.0 - 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = scalar(2.0);
        let mut g = scalar(0.0);
        g.as_mut_slice()[0] = f64::NAN;
        let mut opt = AdamW::new(AdamWConfig::default());
        let err = opt.step(&mut p, &g).unwrap_err();
        assert!(err.to_string().contains("param"));
        assert_eq!(p.get(0, 0), 2.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = scalar(5.0);
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0));
        for _ in 0..500 {
            let g = scalar(2.0 * (p.get(0, 0) - 1.0));
            opt.step(&mut p, &g).unwrap();
        }
        assert!((p.get(0, 0) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut p = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0]);
        p.assign_flat(&[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(p.as_slice(), &[4.0, 5.0, 6.0]);
        assert!(p.assign_flat(&[1.0]).is_err());
    }
}
