//! Forecast-accuracy metrics, interval coverage, standardized residuals, and
//! the partial autocorrelation function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentPath, ModelSpec, ParamVector, PreparedData};

/// Per-component values with their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub per_component: Vec<f64>,
    pub mean: f64,
}

impl ComponentSummary {
    fn from_values(per_component: Vec<f64>) -> Self {
        let mean = per_component.iter().sum::<f64>() / per_component.len() as f64;
        Self { per_component, mean }
    }
}

/// Per-component sums of squares with their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrssSummary {
    pub per_component: Vec<f64>,
    pub total: f64,
}

fn check_window(actual: &[Vec<f64>], point: &[Vec<f64>]) -> Result<(usize, usize)> {
    if actual.is_empty() {
        return Err(Error::Data("empty evaluation window".into()));
    }
    if actual.len() != point.len() {
        return Err(Error::Data(format!(
            "{} actual rows vs {} forecast rows",
            actual.len(),
            point.len()
        )));
    }
    let j = actual[0].len();
    if actual.iter().chain(point.iter()).any(|r| r.len() != j) {
        return Err(Error::Data("ragged rows in evaluation window".into()));
    }
    Ok((actual.len(), j))
}

/// Root mean squared error of the point forecast, per component and averaged.
pub fn frmse(actual: &[Vec<f64>], point: &[Vec<f64>]) -> Result<ComponentSummary> {
    let (n, j) = check_window(actual, point)?;
    let values = (0..j)
        .map(|c| {
            let mse = actual
                .iter()
                .zip(point)
                .map(|(a, p)| (a[c] - p[c]).powi(2))
                .sum::<f64>()
                / n as f64;
            mse.sqrt()
        })
        .collect();
    Ok(ComponentSummary::from_values(values))
}

/// Mean absolute error of the point forecast, per component and averaged.
pub fn fmae(actual: &[Vec<f64>], point: &[Vec<f64>]) -> Result<ComponentSummary> {
    let (n, j) = check_window(actual, point)?;
    let values = (0..j)
        .map(|c| {
            actual
                .iter()
                .zip(point)
                .map(|(a, p)| (a[c] - p[c]).abs())
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(ComponentSummary::from_values(values))
}

/// Residual sum of squares of the point forecast, per component and totalled.
pub fn frss(actual: &[Vec<f64>], point: &[Vec<f64>]) -> Result<FrssSummary> {
    let (_, j) = check_window(actual, point)?;
    let per_component: Vec<f64> = (0..j)
        .map(|c| {
            actual
                .iter()
                .zip(point)
                .map(|(a, p)| (a[c] - p[c]).powi(2))
                .sum::<f64>()
        })
        .collect();
    let total = per_component.iter().sum();
    Ok(FrssSummary { per_component, total })
}

/// Fraction of test points falling inside `[lower, upper]`, per component.
pub fn empirical_coverage(
    actual: &[Vec<f64>],
    lower: &[Vec<f64>],
    upper: &[Vec<f64>],
) -> Result<ComponentSummary> {
    let (n, j) = check_window(actual, lower)?;
    check_window(actual, upper)?;
    let values = (0..j)
        .map(|c| {
            actual
                .iter()
                .zip(lower.iter().zip(upper))
                .filter(|(a, (lo, hi))| lo[c] <= a[c] && a[c] <= hi[c])
                .count() as f64
                / n as f64
        })
        .collect();
    Ok(ComponentSummary::from_values(values))
}

/// Sum of squared standardized residuals per time point over `from..T`.
///
/// Dirichlet variants standardize each component by its fitted standard
/// deviation; the Gaussian variant whitens the ALR residual with the inverse
/// Cholesky factor of the fitted covariance.
pub fn ssr_series(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    path: &LatentPath,
    from: usize,
) -> Result<Vec<f64>> {
    let t_total = data.len();
    if from >= t_total {
        return Err(Error::Data("empty residual window".into()));
    }
    let mut out = Vec::with_capacity(t_total - from);
    if spec.has_precision_path() {
        for t in from..t_total {
            let mu = crate::model::mean_from_eta(&path.eta[t], spec.ref_index, spec.n_components);
            let phi = path.log_phi[t].exp();
            let mut ssr = 0.0;
            for c in 0..spec.n_components {
                let var = mu[c] * (1.0 - mu[c]) / (phi + 1.0);
                let z = (data.y[t][c] - mu[c]) / var.sqrt();
                ssr += z * z;
            }
            if !ssr.is_finite() {
                return Err(Error::Domain(format!("non-finite residual at t = {t}")));
            }
            out.push(ssr);
        }
    } else {
        let sigma = params.sigma.ok_or_else(|| Error::Config("missing scale".into()))?;
        let lmat = params
            .corr_chol
            .as_ref()
            .ok_or_else(|| Error::Config("missing correlation factor".into()))?;
        let w = lmat * sigma;
        for t in from..t_total {
            let resid = &data.alr[t] - &path.eta[t];
            let v = w
                .solve_lower_triangular(&resid)
                .ok_or_else(|| Error::Domain("degenerate covariance factor".into()))?;
            let ssr = v.norm_squared();
            if !ssr.is_finite() {
                return Err(Error::Domain(format!("non-finite residual at t = {t}")));
            }
            out.push(ssr);
        }
    }
    Ok(out)
}

/// Partial autocorrelations at lags `1..=max_lag` via the Durbin-Levinson
/// recursion on biased sample autocorrelations.
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag == 0 {
        return Err(Error::Config("max lag must be positive".into()));
    }
    if n <= max_lag + 1 {
        return Err(Error::Data(format!(
            "series of length {n} too short for lag {max_lag}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Err(Error::Domain("zero-variance series".into()));
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    r.push(1.0);
    for k in 1..=max_lag {
        let ck: f64 = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum::<f64>() / n as f64;
        r.push(ck / c0);
    }

    let mut out = Vec::with_capacity(max_lag);
    let mut prev: Vec<f64> = vec![r[1]];
    out.push(r[1]);
    for k in 2..=max_lag {
        let num = r[k] - (1..k).map(|jj| prev[jj - 1] * r[k - jj]).sum::<f64>();
        let den = 1.0 - (1..k).map(|jj| prev[jj - 1] * r[jj]).sum::<f64>();
        if den.abs() < 1e-12 {
            return Err(Error::Domain(format!("degenerate autocorrelation system at lag {k}")));
        }
        let phi_kk = num / den;
        let mut next = vec![0.0; k];
        for jj in 1..k {
            next[jj - 1] = prev[jj - 1] - phi_kk * prev[k - jj - 1];
        }
        next[k - 1] = phi_kk;
        out.push(phi_kk);
        prev = next;
    }
    Ok(out)
}

/// PACF of one model's residual series with threshold flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelPacf {
    pub model: String,
    /// Values at lags 1..=max_lag.
    pub pacf: Vec<f64>,
    /// Lags (1-based) whose absolute PACF strictly exceeds the threshold.
    pub flagged_lags: Vec<usize>,
}

/// Residual-autocorrelation table across models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacfReport {
    pub max_lag: usize,
    pub threshold: f64,
    pub models: Vec<ModelPacf>,
}

/// Computes the PACF of each model's SSR series and flags lags whose absolute
/// value strictly exceeds `threshold`.
pub fn residual_pacf_report(
    ssr_by_model: &[(String, Vec<f64>)],
    max_lag: usize,
    threshold: f64,
) -> Result<PacfReport> {
    let mut models = Vec::with_capacity(ssr_by_model.len());
    for (name, series) in ssr_by_model {
        let values = pacf(series, max_lag)?;
        let flagged_lags = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| i + 1)
            .collect();
        models.push(ModelPacf { model: name.clone(), pacf: values, flagged_lags });
    }
    Ok(PacfReport { max_lag, threshold, models })
}

/// Full evaluation summary for one forecast window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frmse: ComponentSummary,
    pub fmae: ComponentSummary,
    pub fmae_total: f64,
    pub frss: FrssSummary,
    pub coverage: Option<ComponentSummary>,
    /// Multiplier applied at render time only; stored values stay raw.
    pub scale_factor: f64,
}

/// Computes every point metric (and coverage when bounds are given).
pub fn evaluate_forecast(
    actual: &[Vec<f64>],
    point: &[Vec<f64>],
    bounds: Option<(&[Vec<f64>], &[Vec<f64>])>,
    scale_factor: f64,
) -> Result<MetricsReport> {
    let frmse = frmse(actual, point)?;
    let fmae = fmae(actual, point)?;
    let fmae_total = fmae.per_component.iter().sum();
    let frss = frss(actual, point)?;
    let coverage = match bounds {
        Some((lower, upper)) => Some(empirical_coverage(actual, lower, upper)?),
        None => None,
    };
    Ok(MetricsReport { frmse, fmae, fmae_total, frss, coverage, scale_factor })
}
