//! Autoencoder that condenses raw item text embeddings (dimension `d_o`)
//! into `d`-dimensional initial item embeddings.
//!
//! Encoder `x → W2·relu(W1·x + b1) + b2`, decoder `c → V2·relu(V1·c + e1) + e2`,
//! loss `Σ_i ‖x̂_i − x_i‖²` summed over items and coordinates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{add_l2_penalty, AdamW, Matrix, ParamSet, RegMode};
use crate::config::{is_non_negative, is_positive};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub enc_w1: Matrix,
    pub enc_b1: Matrix,
    pub enc_w2: Matrix,
    pub enc_b2: Matrix,
    pub dec_w1: Matrix,
    pub dec_b1: Matrix,
    pub dec_w2: Matrix,
    pub dec_b2: Matrix,
}

pub const AE_BLOCK_NAMES: [&str; 8] = [
    "enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2",
];

impl ParamSet for AutoencoderParams {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("enc_w1", &self.enc_w1),
            ("enc_b1", &self.enc_b1),
            ("enc_w2", &self.enc_w2),
            ("enc_b2", &self.enc_b2),
            ("dec_w1", &self.dec_w1),
            ("dec_b1", &self.dec_b1),
            ("dec_w2", &self.dec_w2),
            ("dec_b2", &self.dec_b2),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("enc_w1", &mut self.enc_w1),
            ("enc_b1", &mut self.enc_b1),
            ("enc_w2", &mut self.enc_w2),
            ("enc_b2", &mut self.enc_b2),
            ("dec_w1", &mut self.dec_w1),
            ("dec_b1", &mut self.dec_b1),
            ("dec_w2", &mut self.dec_w2),
            ("dec_b2", &mut self.dec_b2),
        ]
    }
}

impl AutoencoderParams {
    pub fn zeros(input_dim: usize, hidden: usize, dim: usize) -> Self {
        Self {
            enc_w1: Matrix::zeros(hidden, input_dim),
            enc_b1: Matrix::zeros(1, hidden),
            enc_w2: Matrix::zeros(dim, hidden),
            enc_b2: Matrix::zeros(1, dim),
            dec_w1: Matrix::zeros(hidden, dim),
            dec_b1: Matrix::zeros(1, hidden),
            dec_w2: Matrix::zeros(input_dim, hidden),
            dec_b2: Matrix::zeros(1, input_dim),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, dim: usize, rng: &mut SplitMix64) -> Self {
        let mut p = Self::zeros(input_dim, hidden, dim);
        p.enc_w1 = Matrix::glorot(hidden, input_dim, input_dim, hidden, rng);
        p.enc_w2 = Matrix::glorot(dim, hidden, hidden, dim, rng);
        p.dec_w1 = Matrix::glorot(hidden, dim, dim, hidden, rng);
        p.dec_w2 = Matrix::glorot(input_dim, hidden, hidden, input_dim, rng);
        p
    }

    /// Rebuilds parameters from named blocks, checking the mirrored shapes.
    pub fn from_blocks(blocks: Vec<(String, Matrix)>) -> Result<Self> {
        let mut map: std::collections::HashMap<String, Matrix> = blocks.into_iter().collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::Format(format!("autoencoder checkpoint lacks {name}")))
        };
        let p = Self {
            enc_w1: take("enc_w1")?,
            enc_b1: take("enc_b1")?,
            enc_w2: take("enc_w2")?,
            enc_b2: take("enc_b2")?,
            dec_w1: take("dec_w1")?,
            dec_b1: take("dec_b1")?,
            dec_w2: take("dec_w2")?,
            dec_b2: take("dec_b2")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.enc_w1.rows()
    }

    pub fn dim(&self) -> usize {
        self.enc_w2.rows()
    }

    fn validate(&self) -> Result<()> {
        let (o, h, d) = (self.input_dim(), self.hidden(), self.dim());
        let expect = [
            (self.enc_b1.shape(), (1, h)),
            (self.enc_w2.shape(), (d, h)),
            (self.enc_b2.shape(), (1, d)),
            (self.dec_w1.shape(), (h, d)),
            (self.dec_b1.shape(), (1, h)),
            (self.dec_w2.shape(), (o, h)),
            (self.dec_b2.shape(), (1, o)),
        ];
        if expect.iter().any(|(a, b)| a != b) {
            return Err(Error::Shape("autoencoder blocks are not mirror-shaped".into()));
        }
        Ok(())
    }
}

struct MlpTrace {
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

fn mlp_forward(w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix, x: &[f64]) -> Result<MlpTrace> {
    let mut pre_hidden = w1.matvec(x)?;
    for (h, b) in pre_hidden.iter_mut().zip(b1.as_slice()) {
        *h += b;
    }
    let hidden: Vec<f64> = pre_hidden.iter().map(|&v| v.max(0.0)).collect();
    let mut out = w2.matvec(&hidden)?;
    for (o, b) in out.iter_mut().zip(b2.as_slice()) {
        *o += b;
    }
    Ok(MlpTrace {
        pre_hidden,
        hidden,
        out,
    })
}

/// Accumulates parameter gradients of a 2-layer MLP and returns the
/// gradient with respect to its input.
#[allow(clippy::too_many_arguments)]
fn mlp_backward(
    w1: &Matrix,
    w2: &Matrix,
    x: &[f64],
    trace: &MlpTrace,
    grad_out: &[f64],
    gw1: &mut Matrix,
    gb1: &mut Matrix,
    gw2: &mut Matrix,
    gb2: &mut Matrix,
) -> Result<Vec<f64>> {
    gw2.add_outer(grad_out, &trace.hidden);
    for (g, d) in gb2.as_mut_slice().iter_mut().zip(grad_out) {
        *g += d;
    }
    let mut g_hidden = w2.matvec_t(grad_out)?;
    for (g, &pre) in g_hidden.iter_mut().zip(&trace.pre_hidden) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    gw1.add_outer(&g_hidden, x);
    for (g, d) in gb1.as_mut_slice().iter_mut().zip(&g_hidden) {
        *g += d;
    }
    w1.matvec_t(&g_hidden)
}

pub fn encode(x: &[f64], params: &AutoencoderParams) -> Result<Vec<f64>> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "encode: input has {} dims, encoder expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    Ok(mlp_forward(&params.enc_w1, &params.enc_b1, &params.enc_w2, &params.enc_b2, x)?.out)
}

pub fn decode(c: &[f64], params: &AutoencoderParams) -> Result<Vec<f64>> {
    if c.len() != params.dim() {
        return Err(Error::Shape(format!(
            "decode: code has {} dims, decoder expects {}",
            c.len(),
            params.dim()
        )));
    }
    Ok(mlp_forward(&params.dec_w1, &params.dec_b1, &params.dec_w2, &params.dec_b2, c)?.out)
}

/// Encodes every row of `x`, in parallel over rows.
pub fn encode_all(x: &Matrix, params: &AutoencoderParams) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|r| encode(x.row(r), params))
        .collect::<Result<_>>()?;
    let data = rows.concat();
    Matrix::from_vec(x.rows(), params.dim(), data)
}

/// Summed squared reconstruction error over the rows of `batch`, plus
/// `penalty·‖Θ‖²`.
pub fn ae_loss(batch: &Matrix, params: &AutoencoderParams, penalty: f64) -> Result<f64> {
    if batch.rows() == 0 {
        return Err(Error::EmptyInput("autoencoder batch"));
    }
    let mut loss = 0.0;
    for r in 0..batch.rows() {
        let x = batch.row(r);
        let xhat = decode(&encode(x, params)?, params)?;
        loss += xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(loss + penalty * params.sum_squares())
}

/// Loss and gradient of [`ae_loss`].
pub fn ae_loss_and_grad(batch: &Matrix, params: &AutoencoderParams, penalty: f64) -> Result<(f64, AutoencoderParams)> {
    if batch.rows() == 0 {
        return Err(Error::EmptyInput("autoencoder batch"));
    }
    if batch.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, autoencoder expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let p = params;
    let mut g = AutoencoderParams::zeros(p.input_dim(), p.hidden(), p.dim());
    let mut loss = 0.0;
    for r in 0..batch.rows() {
        let x = batch.row(r);
        let enc = mlp_forward(&p.enc_w1, &p.enc_b1, &p.enc_w2, &p.enc_b2, x)?;
        let dec = mlp_forward(&p.dec_w1, &p.dec_b1, &p.dec_w2, &p.dec_b2, &enc.out)?;
        let diff: Vec<f64> = dec.out.iter().zip(x).map(|(a, b)| a - b).collect();
        loss += diff.iter().map(|d| d * d).sum::<f64>();
        let g_xhat: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
        let g_code = mlp_backward(
            &p.dec_w1, &p.dec_w2, &enc.out, &dec, &g_xhat, &mut g.dec_w1, &mut g.dec_b1, &mut g.dec_w2, &mut g.dec_b2,
        )?;
        mlp_backward(
            &p.enc_w1, &p.enc_w2, x, &enc, &g_code, &mut g.enc_w1, &mut g.enc_b1, &mut g.enc_w2, &mut g.enc_b2,
        )?;
    }
    loss += add_l2_penalty(p, &mut g, penalty)?;
    Ok((loss, g))
}

/// Mean squared reconstruction error per coordinate over all rows.
pub fn reconstruction_mse(x: &Matrix, params: &AutoencoderParams) -> Result<f64> {
    let n = (x.rows() * x.cols()).max(1) as f64;
    Ok(ae_loss(x, params, 0.0)? / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondenserConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    /// Output dimension `d`.
    pub dim: usize,
    pub seed: u64,
    pub reg_mode: RegMode,
}

impl Default for CondenserConfig {
    fn default() -> Self {
        crate::config::autoencoder_preset()
    }
}

impl CondenserConfig {
    pub fn validate(&self) -> Result<()> {
        if !is_positive(self.lr) || !is_non_negative(self.weight_decay) || self.batch_size == 0 || self.hidden == 0 || self.dim == 0 {
            return Err(Error::Config(format!("invalid autoencoder configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCondenser {
    pub params: AutoencoderParams,
    /// Row `i` is the encoding of input row `i` under the final parameters.
    pub condensed: Matrix,
    /// Per epoch: reconstruction loss summed over all items, divided by the item count.
    pub epoch_loss: Vec<f64>,
}

/// Trains the autoencoder with shuffled minibatch AdamW for `config.epochs`
/// epochs and encodes every row of `x`.
pub fn train_autoencoder(x: &Matrix, config: &CondenserConfig) -> Result<TrainedCondenser> {
    config.validate()?;
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput("text embedding matrix"));
    }
    let mut rng = SplitMix64::new(config.seed);
    let mut params = AutoencoderParams::init(x.cols(), config.hidden, config.dim, &mut rng);
    let mut opt = AdamW::new(config.reg_mode.adamw(config.lr, config.weight_decay));
    let penalty = config.reg_mode.penalty(config.weight_decay);
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..x.rows()).collect();

    for epoch in 0..config.epochs {
        SplitMix64::for_stream(config.seed, epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<f64> = chunk.iter().flat_map(|&r| x.row(r).iter().copied()).collect();
            let batch = Matrix::from_vec(chunk.len(), x.cols(), rows)?;
            let (loss, grads) = ae_loss_and_grad(&batch, &params, penalty)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "autoencoder loss at epoch {} (last finite epoch mean {:?})",
                    epoch + 1,
                    epoch_loss.last()
                )));
            }
            total += loss - penalty * params.sum_squares();
            opt.step(&mut params, &grads)?;
        }
        let mean = total / x.rows() as f64;
        log::debug!("autoencoder epoch {} loss {mean:.6}", epoch + 1);
        epoch_loss.push(mean);
    }
    let condensed = encode_all(x, &params)?;
    Ok(TrainedCondenser {
        params,
        condensed,
        epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;

    fn random_params(o: usize, h: usize, d: usize, seed: u64) -> AutoencoderParams {
        let mut rng = SplitMix64::new(seed);
        let mut p = AutoencoderParams::init(o, h, d, &mut rng);
        for (_, b) in p.blocks_mut() {
            for v in b.as_mut_slice() {
                *v += rng.uniform(-0.3, 0.3);
            }
        }
        p
    }

    fn relu(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            0.0
        }
    }

    /// Straight-line recompute with explicit index loops.
    fn oracle_mlp(w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; w1.rows()];
        for j in 0..w1.rows() {
            let mut s = b1.get(0, j);
            for k in 0..x.len() {
                s += w1.get(j, k) * x[k];
            }
            h[j] = relu(s);
        }
        let mut out = vec![0.0; w2.rows()];
        for j in 0..w2.rows() {
            let mut s = b2.get(0, j);
            for k in 0..h.len() {
                s += w2.get(j, k) * h[k];
            }
            out[j] = s;
        }
        out
    }

    #[test]
    fn zero_params_give_zero() {
        let p = AutoencoderParams::zeros(4, 3, 2);
        assert_eq!(encode(&[1.0, 2.0, 3.0, 4.0], &p).unwrap(), vec![0.0, 0.0]);
        assert_eq!(decode(&[1.0, -1.0], &p).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn scalar_identity_net() {
        let mut p = AutoencoderParams::zeros(1, 1, 1);
        for (name, b) in p.blocks_mut() {
            if name.ends_with("w1") || name.ends_with("w2") {
                b.fill(1.0);
            }
        }
        assert_eq!(encode(&[2.0], &p).unwrap(), vec![2.0]);
    }

    #[test]
    fn identity_roundtrip_for_positive_inputs() {
        let mut p = AutoencoderParams::zeros(2, 2, 2);
        for (name, b) in p.blocks_mut() {
            if name.contains('w') {
                b.set(0, 0, 1.0);
                b.set(1, 1, 1.0);
            }
        }
        let x = [0.7, 2.5];
        assert_eq!(decode(&encode(&x, &p).unwrap(), &p).unwrap(), x.to_vec());
    }

    #[test]
    fn encode_decode_match_oracle() {
        let p = random_params(4, 3, 2, 11);
        let x = [0.5, -1.0, 2.0, 0.25];
        let c = encode(&x, &p).unwrap();
        let c_ref = oracle_mlp(&p.enc_w1, &p.enc_b1, &p.enc_w2, &p.enc_b2, &x);
        for (a, b) in c.iter().zip(&c_ref) {
            assert!((a - b).abs() < 1e-14);
        }
        let xh = decode(&c, &p).unwrap();
        let xh_ref = oracle_mlp(&p.dec_w1, &p.dec_b1, &p.dec_w2, &p.dec_b2, &c_ref);
        for (a, b) in xh.iter().zip(&xh_ref) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(encode(&[1.0], &p).is_err());
        assert!(decode(&[1.0], &p).is_err());
    }

    #[test]
    fn loss_examples() {
        let mut p = AutoencoderParams::zeros(2, 2, 2);
        let batch = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(ae_loss(&batch, &p, 0.0).unwrap(), 1.0);
        p.dec_b2.set(0, 0, 1.0);
        assert_eq!(ae_loss(&batch, &p, 0.0).unwrap(), 0.0);
        assert!(ae_loss(&Matrix::zeros(0, 2), &p, 0.0).is_err());
    }

    #[test]
    fn batch_loss_matches_scalar_recompute() {
        let p = random_params(4, 3, 2, 5);
        let batch = Matrix::from_rows(&[
            vec![0.1, 0.2, -0.3, 0.4],
            vec![1.0, -1.0, 0.5, 0.0],
            vec![-0.2, 0.9, 0.3, -0.7],
        ])
        .unwrap();
        let mut expected = 0.0;
        for r in 0..3 {
            let x = batch.row(r);
            let c = oracle_mlp(&p.enc_w1, &p.enc_b1, &p.enc_w2, &p.enc_b2, x);
            let xh = oracle_mlp(&p.dec_w1, &p.dec_b1, &p.dec_w2, &p.dec_b2, &c);
            for k in 0..4 {
                expected += (xh[k] - x[k]).powi(2);
            }
        }
        assert!((ae_loss(&batch, &p, 0.0).unwrap() - expected).abs() < 1e-12);
        let with_reg = ae_loss(&batch, &p, 0.01).unwrap();
        assert!((with_reg - expected - 0.01 * p.sum_squares()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_params(6, 4, 2, 21);
        let mut rng = SplitMix64::new(99);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        for penalty in [0.0, 0.05] {
            let (_, g) = ae_loss_and_grad(&batch, &p, penalty).unwrap();
            let mut probe = p.clone();
            let report = finite_diff_check(
                |flat| {
                    probe.assign_flat(flat)?;
                    ae_loss(&batch, &probe, penalty)
                },
                &p.flatten(),
                &g.flatten(),
                None,
                1e-3,
                1e-4,
                1e-6,
            )
            .unwrap();
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn zero_epochs_is_initial_encoding() {
        let mut rng = SplitMix64::new(1);
        let x = Matrix::glorot(7, 5, 1, 1, &mut rng);
        let config = CondenserConfig {
            epochs: 0,
            hidden: 4,
            dim: 3,
            seed: 8,
            ..CondenserConfig::default()
        };
        let out = train_autoencoder(&x, &config).unwrap();
        let init = AutoencoderParams::init(5, 4, 3, &mut SplitMix64::new(8));
        assert_eq!(out.params, init);
        assert_eq!(out.condensed, encode_all(&x, &init).unwrap());
        assert!(out.epoch_loss.is_empty());
    }

    #[test]
    fn from_blocks_checks_shapes() {
        let p = random_params(4, 3, 2, 1);
        let blocks: Vec<(String, Matrix)> = p.blocks().into_iter().map(|(n, m)| (n.to_string(), m.clone())).collect();
        assert_eq!(AutoencoderParams::from_blocks(blocks.clone()).unwrap(), p);
        let mut bad = blocks;
        bad[1].1 = Matrix::zeros(1, 5);
        assert!(AutoencoderParams::from_blocks(bad).is_err());
    }
}
