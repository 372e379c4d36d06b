//! Model variants, their latent recursions, and the log posterior.
//!
//! All three variants share one mean recursion in ALR space: the linear
//! predictor follows a VARMA process around the covariate effect, with the
//! first `m = max(P, Q, L, K)` predictors pinned to the transformed
//! observations so every moving-average innovation indexed at or before `m`
//! vanishes. The Dirichlet variants turn the predictor into a mean
//! composition and pair it with a log-linear precision; the DARCH variant
//! adds an ARMA recursion on the log precision driven by past squared ALR
//! innovations. The Gaussian variant models the transformed data directly
//! with covariance `sigma^2 * Omega`.

pub mod gradient;
pub mod params;
pub mod priors;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::compositional::{alr, CompositionalSeries, SIMPLEX_EPS};
use crate::covariates::{CovariateClass, CovariateSpec, DesignMatrices};
use crate::error::{Error, Result};

pub use params::{ParamLayout, ParamVector};
pub use priors::{Gaussian, Priors};

/// Absolute bound on the log precision; beyond it a parameter point is
/// rejected rather than risking overflow in the likelihood.
pub const LOG_PHI_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Dirichlet observation law, log-linear precision.
    BDarma,
    /// Dirichlet observation law, ARMA recursion on the log precision.
    BDarmaDarch,
    /// Gaussian VARMA on the ALR-transformed data.
    BTVarma,
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelVariant::BDarma => "b-darma",
            ModelVariant::BDarmaDarch => "b-darma-darch",
            ModelVariant::BTVarma => "b-tvarma",
        };
        f.write_str(s)
    }
}

/// Declarative description of one model fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    /// Component count J.
    pub n_components: usize,
    /// VAR order P.
    pub ar_order: usize,
    /// VMA order Q.
    pub ma_order: usize,
    /// Log-precision AR order L (DARCH variant only).
    pub prec_ar_order: usize,
    /// Log-precision MA order K (DARCH variant only).
    pub prec_ma_order: usize,
    /// 0-based reference component for the ALR transform.
    pub ref_index: usize,
    pub mean_covariates: CovariateSpec,
    pub prec_covariates: CovariateSpec,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_components < 2 {
            return Err(Error::Config("need at least 2 components".into()));
        }
        if self.ref_index >= self.n_components {
            return Err(Error::Config(format!(
                "reference index {} out of range for {} components",
                self.ref_index, self.n_components
            )));
        }
        if self.variant != ModelVariant::BDarmaDarch
            && (self.prec_ar_order > 0 || self.prec_ma_order > 0)
        {
            return Err(Error::Config(
                "precision AR/MA orders require the DARCH variant".into(),
            ));
        }
        self.mean_covariates.validate()?;
        self.prec_covariates.validate()?;
        Ok(())
    }

    /// Conditioning length m: observations up to this index (1-based) are
    /// held fixed so every lagged quantity in both recursions exists.
    pub fn max_lag(&self) -> usize {
        self.ar_order
            .max(self.ma_order)
            .max(self.prec_ar_order)
            .max(self.prec_ma_order)
    }

    /// ALR dimension J - 1.
    pub fn n_coords(&self) -> usize {
        self.n_components - 1
    }

    pub fn has_precision_path(&self) -> bool {
        self.variant != ModelVariant::BTVarma
    }
}

/// Series-derived constants shared by every likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// ALR-transformed observations.
    pub alr: Vec<DVector<f64>>,
    /// Clamped log shares (Dirichlet variants).
    pub log_y: Vec<DVector<f64>>,
    /// Raw shares.
    pub y: Vec<DVector<f64>>,
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.alr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alr.is_empty()
    }
}

/// Transforms a series once so repeated posterior evaluations skip it.
pub fn prepare(series: &CompositionalSeries, ref_index: usize) -> Result<PreparedData> {
    let mut alr_rows = Vec::with_capacity(series.len());
    let mut log_rows = Vec::with_capacity(series.len());
    let mut raw_rows = Vec::with_capacity(series.len());
    for row in series.rows() {
        let a = alr(row, ref_index)?;
        alr_rows.push(DVector::from_vec(a.values().to_vec()));
        log_rows.push(DVector::from_iterator(
            row.n_components(),
            row.values().iter().map(|&v| v.max(SIMPLEX_EPS).ln()),
        ));
        raw_rows.push(DVector::from_vec(row.values().to_vec()));
    }
    Ok(PreparedData { alr: alr_rows, log_y: log_rows, y: raw_rows })
}

/// The deterministic latent state implied by one parameter set.
#[derive(Debug, Clone)]
pub struct LatentPath {
    /// Linear predictors eta_t, one per observation.
    pub eta: Vec<DVector<f64>>,
    /// Log precisions (empty for the Gaussian variant).
    pub log_phi: Vec<f64>,
}

/// Mean composition implied by a linear predictor: a softmax that reinserts
/// the reference slot. Not clamped; vanishing shares reject naturally through
/// the likelihood.
pub(crate) fn mean_from_eta(eta: &DVector<f64>, ref_index: usize, n_components: usize) -> Vec<f64> {
    let mut logits = Vec::with_capacity(n_components);
    let mut k = 0;
    for i in 0..n_components {
        if i == ref_index {
            logits.push(0.0);
        } else {
            logits.push(eta[k]);
            k += 1;
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in &mut logits {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut logits {
        *v /= sum;
    }
    logits
}

/// Runs the VARMA mean recursion over the whole span.
///
/// For `t <= m` the predictor is pinned to the transformed observation, so
/// VMA innovations indexed at or before `m` are exactly zero.
pub fn mean_recursion(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
) -> Vec<DVector<f64>> {
    let t_total = data.len();
    let m = spec.max_lag();
    let mut eta: Vec<DVector<f64>> = Vec::with_capacity(t_total);
    for t in 0..t_total.min(m) {
        eta.push(data.alr[t].clone());
    }
    for t in m..t_total {
        let mut e = designs.mean_effect(t, &params.beta);
        for (p, a_mat) in params.ar.iter().enumerate() {
            let lagged = t - (p + 1);
            let dev = &data.alr[lagged] - designs.mean_effect(lagged, &params.beta);
            e += a_mat * dev;
        }
        for (q, b_mat) in params.ma.iter().enumerate() {
            let lagged = t - (q + 1);
            let innov = &data.alr[lagged] - &eta[lagged];
            e += b_mat * innov;
        }
        eta.push(e);
    }
    eta
}

/// Runs the log-precision recursion given the mean path.
///
/// Reduces to the log-linear form when the precision AR/MA orders are zero.
/// A log precision outside `±LOG_PHI_LIMIT` signals rejection.
pub fn precision_recursion(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
    eta: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let t_total = data.len();
    let m = spec.max_lag();
    let mut log_phi = Vec::with_capacity(t_total);
    for t in 0..t_total.min(m) {
        log_phi.push(designs.prec_effect(t, &params.gamma));
    }
    for t in m..t_total {
        let mut w = designs.prec_effect(t, &params.gamma);
        for (l, &alpha) in params.prec_ar.iter().enumerate() {
            let lagged = t - (l + 1);
            if lagged >= m {
                w += alpha * (log_phi[lagged] - designs.prec_effect(lagged, &params.gamma));
            }
        }
        for (k, &tau) in params.prec_ma.iter().enumerate() {
            let lagged = t - (k + 1);
            let innov = &data.alr[lagged] - &eta[lagged];
            w += tau * innov.norm_squared();
        }
        if w.abs() > LOG_PHI_LIMIT {
            return Err(Error::Domain(format!(
                "log precision {w:.2} out of range at t = {t}"
            )));
        }
        log_phi.push(w);
    }
    Ok(log_phi)
}

/// Both recursions; the log-precision path is empty for the Gaussian variant.
pub fn latent_path(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
) -> Result<LatentPath> {
    let eta = mean_recursion(spec, params, data, designs);
    let log_phi = if spec.has_precision_path() {
        precision_recursion(spec, params, data, designs, &eta)?
    } else {
        Vec::new()
    };
    Ok(LatentPath { eta, log_phi })
}

fn dirichlet_term(log_y: &DVector<f64>, mu: &[f64], phi: f64) -> f64 {
    let mut out = ln_gamma(phi);
    for (&ly, &mj) in log_y.iter().zip(mu) {
        let a = phi * mj;
        out -= ln_gamma(a);
        out += (a - 1.0) * ly;
    }
    out
}

/// Log likelihood of the observations after the conditioning window.
///
/// Returns negative infinity when the parameter point is rejected (log
/// precision out of range, or a degenerate Gaussian factor).
pub fn log_likelihood(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
) -> f64 {
    let m = spec.max_lag();
    let t_total = data.len();
    if t_total <= m {
        return f64::NEG_INFINITY;
    }
    let path = match latent_path(spec, params, data, designs) {
        Ok(p) => p,
        Err(_) => return f64::NEG_INFINITY,
    };
    match spec.variant {
        ModelVariant::BDarma | ModelVariant::BDarmaDarch => {
            let mut total = 0.0;
            for t in m..t_total {
                let mu = mean_from_eta(&path.eta[t], spec.ref_index, spec.n_components);
                total += dirichlet_term(&data.log_y[t], &mu, path.log_phi[t].exp());
            }
            total
        }
        ModelVariant::BTVarma => {
            let sigma = params.sigma.expect("scale present");
            let l = params.corr_chol.as_ref().expect("correlation factor present");
            let d = spec.n_coords();
            let w = l * sigma;
            let mut log_det = 0.0;
            for i in 0..d {
                if w[(i, i)] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                log_det += w[(i, i)].ln();
            }
            let norm_const = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
            let mut total = 0.0;
            for t in m..t_total {
                let resid = &data.alr[t] - &path.eta[t];
                let v = match w.solve_lower_triangular(&resid) {
                    Some(v) => v,
                    None => return f64::NEG_INFINITY,
                };
                total += norm_const - log_det - 0.5 * v.norm_squared();
            }
            total
        }
    }
}

pub(crate) fn class_prior(priors: &Priors, class: CovariateClass, precision_side: bool) -> Gaussian {
    match (precision_side, class) {
        (false, CovariateClass::Intercept) => priors.intercept,
        (false, CovariateClass::Trend) => priors.trend,
        (false, CovariateClass::Fourier) => priors.fourier,
        (true, CovariateClass::Intercept) => priors.prec_intercept,
        (true, CovariateClass::Trend) => priors.prec_trend,
        (true, CovariateClass::Fourier) => priors.prec_fourier,
    }
}

/// Log prior density of one parameter set.
///
/// Independent normals per group, a half-normal on sigma, and an LKJ density
/// on the correlation Cholesky factor (without its normalizing constant,
/// which does not depend on the parameters).
pub fn log_prior(
    spec: &ModelSpec,
    priors: &Priors,
    params: &ParamVector,
    designs: &DesignMatrices,
) -> f64 {
    let d = spec.n_coords();
    let mut total = 0.0;
    for mat in &params.ar {
        for r in 0..d {
            for c in 0..d {
                let g = if r == c { priors.ar_diag } else { priors.ar_offdiag };
                total += g.log_pdf(mat[(r, c)]);
            }
        }
    }
    for mat in &params.ma {
        for r in 0..d {
            for c in 0..d {
                let g = if r == c { priors.ma_diag } else { priors.ma_offdiag };
                total += g.log_pdf(mat[(r, c)]);
            }
        }
    }
    for (i, &b) in params.beta.iter().enumerate() {
        total += class_prior(priors, designs.beta_class(i), false).log_pdf(b);
    }
    for (i, &g) in params.gamma.iter().enumerate() {
        total += class_prior(priors, designs.gamma_class(i), true).log_pdf(g);
    }
    for &a in &params.prec_ar {
        total += priors.prec_ar.log_pdf(a);
    }
    for &t in &params.prec_ma {
        total += priors.prec_ma.log_pdf(t);
    }
    if let Some(sigma) = params.sigma {
        if sigma <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += std::f64::consts::LN_2 + Gaussian::new(0.0, priors.scale_sd).log_pdf(sigma);
    }
    if let Some(l) = &params.corr_chol {
        let eta = priors.lkj_shape;
        for r in 1..d {
            let exponent = (d - (r + 1)) as f64 + 2.0 * eta - 2.0;
            total += exponent * l[(r, r)].ln();
        }
    }
    total
}

/// Unnormalized log posterior on the constrained scale.
pub fn log_posterior(
    spec: &ModelSpec,
    priors: &Priors,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
) -> f64 {
    let prior = log_prior(spec, priors, params, designs);
    if !prior.is_finite() {
        return f64::NEG_INFINITY;
    }
    prior + log_likelihood(spec, params, data, designs)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::compositional::{close, Composition};
    use rand::Rng;

    pub fn spec_with(
        variant: ModelVariant,
        n_components: usize,
        p: usize,
        q: usize,
        l: usize,
        k: usize,
    ) -> ModelSpec {
        ModelSpec {
            variant,
            n_components,
            ar_order: p,
            ma_order: q,
            prec_ar_order: l,
            prec_ma_order: k,
            ref_index: n_components - 1,
            mean_covariates: CovariateSpec::intercept_only(),
            prec_covariates: CovariateSpec::intercept_only(),
        }
    }

    pub fn random_series(rng: &mut impl Rng, t_total: usize, j: usize) -> CompositionalSeries {
        let rows: Vec<Composition> = (0..t_total)
            .map(|_| close(&(0..j).map(|_| rng.gen_range(0.2..2.0)).collect::<Vec<_>>()).unwrap())
            .collect();
        CompositionalSeries::with_default_index(rows).unwrap()
    }
}
