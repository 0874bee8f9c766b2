use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::DynamicsError;

/// Two-sided p-value of a Student-t statistic with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub df: usize,
    /// Absent when every delta is equal.
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub degenerate: bool,
}

/// One-sample t-test of the deltas against zero.
pub fn paired_ttest(deltas: &[f64]) -> Result<TTest, DynamicsError> {
    let n = deltas.len();
    if n < 2 {
        return Err(DynamicsError::InsufficientData(format!(
            "t-test needs at least 2 deltas, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = deltas.iter().sum::<f64>() / nf;
    let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return Ok(TTest {
            n,
            mean,
            sd,
            df: n - 1,
            t: None,
            p: None,
            degenerate: true,
        });
    }
    let t = mean / (sd / nf.sqrt());
    Ok(TTest {
        n,
        mean,
        sd,
        df: n - 1,
        t: Some(t),
        p: Some(t_two_sided_p(t, nf - 1.0)),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Intercept first, then one coefficient per predictor column.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Absent when the residual variance is zero.
    pub p_values: Vec<Option<f64>>,
    /// Absent when the target is constant.
    pub r2: Option<f64>,
    pub n: usize,
    pub df: usize,
}

/// Least squares with an intercept, solved by QR.
///
/// `predictors[i]` is the predictor row of observation `i`.
pub fn ols_fit(predictors: &[Vec<f64>], target: &[f64]) -> Result<RegressionFit, DynamicsError> {
    let n = target.len();
    if predictors.len() != n {
        return Err(DynamicsError::InvalidInput(format!(
            "{} predictor rows for {n} targets",
            predictors.len()
        )));
    }
    let p = predictors.first().map_or(0, Vec::len);
    if predictors.iter().any(|r| r.len() != p) {
        return Err(DynamicsError::InvalidInput("ragged predictor rows".into()));
    }
    let k = p + 1;
    if n <= k {
        return Err(DynamicsError::InsufficientData(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { predictors[i][j - 1] });
    let y = DVector::from_column_slice(target);
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..k).any(|j| r[(j, j)].abs() <= scale * 1e-12 * n as f64) {
        return Err(DynamicsError::Singular);
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(DynamicsError::Singular)?;
    let residuals = &y - &x * &beta;
    let ss_res = residuals.norm_squared();
    let mean_y = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let df = n - k;
    let sigma2 = ss_res / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(DynamicsError::Singular)?;
    let std_errors: Vec<f64> = (0..k)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt())
        .collect();
    let p_values = beta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| (*se > 0.0).then(|| t_two_sided_p(b / se, df as f64)))
        .collect();
    Ok(RegressionFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        p_values,
        r2: (ss_tot > 0.0).then(|| (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)),
        n,
        df,
    })
}
