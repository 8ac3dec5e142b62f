use crate::error::{Error, Result};

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares `analytic` against `(f(θ + h·e_k) − f(θ − h·e_k)) / 2h` for each
/// coordinate in `coords` (all coordinates when `None`).
///
/// The error for a coordinate is `|a − n| / max(|a|, |n|, floor)`: relative
/// once the gradient magnitude exceeds `floor`, absolute below it, so
/// near-zero entries are not judged on truncation noise alone.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
    h: f64,
    tol: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "gradient check: {} params vs {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tol,
        passed: true,
    };
    for &k in coords {
        if k >= params.len() {
            return Err(Error::Shape(format!("gradient check coordinate {k} out of range")));
        }
        let orig = theta[k];
        theta[k] = orig + h;
        let plus = loss(&theta)?;
        theta[k] = orig - h;
        let minus = loss(&theta)?;
        theta[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at perturbed coordinate {k}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = err;
            report.worst_index = k;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = finite_diff_check(|t| Ok(t[0] * t[0]), &[3.0], &[6.0], None, 1e-3, 1e-4, 1e-8).unwrap();
        assert!(r.passed);
        assert!(r.max_rel_error < 1e-10);
        assert!((r.worst_numeric - 6.0).abs() < 1e-10);
    }

    #[test]
    fn sine_at_zero() {
        let r = finite_diff_check(|t| Ok(t[0].sin()), &[0.0], &[1.0], None, 1e-3, 1e-6, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn wrong_gradient_fails() {
        let r = finite_diff_check(|t| Ok(t[0] * t[0]), &[3.0], &[5.0], None, 1e-3, 1e-4, 1e-8).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn non_finite_loss_errors() {
        let r = finite_diff_check(|t| Ok(t[0].ln()), &[0.0], &[1.0], None, 1e-3, 1e-4, 1e-8);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn subset_of_coordinates() {
        let f = |t: &[f64]| Ok(t[0] * t[1] + t[2].powi(3));
        let p = [1.0, 2.0, 0.5];
        let g = [2.0, 999.0, 0.75];
        let r = finite_diff_check(f, &p, &g, Some(&[0, 2]), 1e-3, 1e-4, 1e-8).unwrap();
        assert_eq!(r.checked, 2);
        // d/dx x³ at 0.5 has O(h²) truncation error of h² = 1e-6 relative to 0.75.
        assert!(r.passed, "{r:?}");
    }
}
