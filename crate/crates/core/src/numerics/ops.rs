use crate::error::{Error, Result};

/// Variance floor used by [`layer_norm`].
pub const LN_EPS: f64 = 1e-5;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax with max subtraction.
pub fn softmax_stable(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("softmax logits"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    Ok(out)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Layer normalisation without gain or bias: `(x - mean) / sqrt(var + eps)`
/// with the population variance. A constant vector maps to zeros.
pub fn layer_norm(x: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Shape(format!(
            "layer_norm needs dimension >= 2, got {}",
            x.len()
        )));
    }
    let (mean, inv_std) = ln_stats(x, eps);
    Ok(x.iter().map(|&v| (v - mean) * inv_std).collect())
}

pub(crate) fn ln_stats(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Gradient of [`layer_norm`] with respect to its input, given the upstream
/// gradient `grad_out`:
/// `dx = inv_std * (g - mean(g) - x̂ * mean(g ⊙ x̂))`.
pub fn layer_norm_backward(x: &[f64], grad_out: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.len() != grad_out.len() {
        return Err(Error::Shape("layer_norm_backward: length mismatch".into()));
    }
    if x.len() < 2 {
        return Err(Error::Shape("layer_norm_backward needs dimension >= 2".into()));
    }
    let n = x.len() as f64;
    let (mean, inv_std) = ln_stats(x, eps);
    let xhat: Vec<f64> = x.iter().map(|&v| (v - mean) * inv_std).collect();
    let g_mean = grad_out.iter().sum::<f64>() / n;
    let gx_mean = dot(grad_out, &xhat) / n;
    Ok(grad_out
        .iter()
        .zip(&xhat)
        .map(|(&g, &xh)| inv_std * (g - g_mean - xh * gx_mean))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_stable(&[4.2]).unwrap(), vec![1.0]);
        let s = softmax_stable(&[0.3, 0.3, 0.3]).unwrap();
        for v in s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let e = std::f64::consts::E;
        let s = softmax_stable(&[1.0, 0.0]).unwrap();
        assert!((s[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((s[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((s[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!(softmax_stable(&[]).is_err());
        assert!(softmax_stable(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let s = softmax_stable(&[1000.0, 999.0]).unwrap();
        assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
        assert!(s[0] > s[1]);
    }

    #[test]
    fn layer_norm_examples() {
        assert_eq!(layer_norm(&[5.0; 4], LN_EPS).unwrap(), vec![0.0; 4]);
        let y = layer_norm(&[1.0, -1.0], LN_EPS).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-4 && (y[1] + 1.0).abs() < 1e-4);
        let y = layer_norm(&[1.0, 2.0, 3.0], LN_EPS).unwrap();
        let denom = (2.0f64 / 3.0 + LN_EPS).sqrt();
        for (v, x) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - (x - 2.0) / denom).abs() < 1e-15);
        }
        assert!(layer_norm(&[1.0], LN_EPS).is_err());
    }

    #[test]
    fn softplus_and_log_sigmoid() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(-2.0) - 0.126_928_011_042_972_1).abs() < 1e-12);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert_eq!(softplus(-800.0), 0.0);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn layer_norm_backward_matches_central_differences() {
        let x = [0.3, -1.2, 2.5, 0.7, -0.4];
        let g = [0.5, -0.1, 0.9, 0.2, -0.7];
        let analytic = layer_norm_backward(&x, &g, LN_EPS).unwrap();
        let h = 1e-5;
        for k in 0..x.len() {
            let f = |d: f64| {
                let mut xp = x;
                xp[k] += d;
                dot(&layer_norm(&xp, LN_EPS).unwrap(), &g)
            };
            let numeric = (f(h) - f(-h)) / (2.0 * h);
            assert!((numeric - analytic[k]).abs() < 1e-8, "coord {k}");
        }
    }

    proptest! {
        #[test]
        fn softmax_normalised_and_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 1..20),
            shift in -50.0f64..50.0,
        ) {
            let a = softmax_stable(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let b = softmax_stable(&shifted).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn layer_norm_moments(x in prop::collection::vec(-10.0f64..10.0, 2..32)) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
            prop_assume!(var > 1e-2);
            let y = layer_norm(&x, LN_EPS).unwrap();
            let n = y.len() as f64;
            let m = y.iter().sum::<f64>() / n;
            let v = y.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-10);
            // var(y) = var / (var + eps), so the gap shrinks with the input spread.
            prop_assert!((v - 1.0).abs() < LN_EPS / var + 1e-12);
        }

        #[test]
        fn layer_norm_unit_variance_for_spread_inputs(x in prop::collection::vec(-100.0f64..100.0, 2..32)) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
            prop_assume!(var >= 10.0);
            let y = layer_norm(&x, LN_EPS).unwrap();
            let n = y.len() as f64;
            let m = y.iter().sum::<f64>() / n;
            let v = y.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((v - 1.0).abs() < 1e-6);
        }
    }
}
