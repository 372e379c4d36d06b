//! Prior hyperparameters for each parameter group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent normal prior for one scalar group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// d/dx of `log_pdf`.
    pub fn grad(&self, x: f64) -> f64 {
        -(x - self.mean) / (self.sd * self.sd)
    }
}

/// Full prior set for one model fit.
///
/// Mean-model coefficient priors are keyed by covariate class; VAR/VMA
/// matrices distinguish diagonal from off-diagonal elements. The scale
/// parameter of the Gaussian variant takes a half-normal prior and its
/// correlation Cholesky factor an LKJ prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub ar_diag: Gaussian,
    pub ar_offdiag: Gaussian,
    pub ma_diag: Gaussian,
    pub ma_offdiag: Gaussian,
    pub intercept: Gaussian,
    pub trend: Gaussian,
    pub fourier: Gaussian,
    pub prec_intercept: Gaussian,
    pub prec_trend: Gaussian,
    pub prec_fourier: Gaussian,
    /// Log-precision AR coefficients (alpha).
    pub prec_ar: Gaussian,
    /// Log-precision innovation coefficients (tau).
    pub prec_ma: Gaussian,
    /// Half-normal scale for sigma.
    pub scale_sd: f64,
    /// LKJ shape for the correlation Cholesky factor.
    pub lkj_shape: f64,
}

impl Priors {
    /// Simulation-study prior set: standard-normal VAR/VMA elements, tight
    /// intercepts, a log-precision intercept centered at 7, and informative
    /// precision AR/MA locations.
    pub fn simulation() -> Self {
        Self {
            ar_diag: Gaussian::new(0.0, 1.0),
            ar_offdiag: Gaussian::new(0.0, 1.0),
            ma_diag: Gaussian::new(0.0, 1.0),
            ma_offdiag: Gaussian::new(0.0, 1.0),
            intercept: Gaussian::new(0.0, 0.3),
            trend: Gaussian::new(0.0, 0.1),
            fourier: Gaussian::new(0.0, 1.0),
            prec_intercept: Gaussian::new(7.0, 1.5),
            prec_trend: Gaussian::new(0.0, 0.1),
            prec_fourier: Gaussian::new(0.0, 1.0),
            prec_ar: Gaussian::new(0.35, 0.5),
            prec_ma: Gaussian::new(-0.75, 0.5),
            scale_sd: 0.5,
            lkj_shape: 3.0,
        }
    }

    /// Weakly informative prior set for data fits: diagonal-favoring VAR/VMA
    /// elements and standard-normal precision dynamics.
    pub fn data_fit() -> Self {
        Self {
            ar_diag: Gaussian::new(0.4, 0.5),
            ar_offdiag: Gaussian::new(0.0, 0.5),
            ma_diag: Gaussian::new(0.4, 0.5),
            ma_offdiag: Gaussian::new(0.0, 0.5),
            intercept: Gaussian::new(0.0, 2.0),
            trend: Gaussian::new(0.0, 0.1),
            fourier: Gaussian::new(0.0, 1.0),
            prec_intercept: Gaussian::new(0.0, 2.0),
            prec_trend: Gaussian::new(0.0, 0.1),
            prec_fourier: Gaussian::new(0.0, 1.0),
            prec_ar: Gaussian::new(0.0, 1.0),
            prec_ma: Gaussian::new(0.0, 1.0),
            scale_sd: 0.5,
            lkj_shape: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let groups = [
            self.ar_diag,
            self.ar_offdiag,
            self.ma_diag,
            self.ma_offdiag,
            self.intercept,
            self.trend,
            self.fourier,
            self.prec_intercept,
            self.prec_trend,
            self.prec_fourier,
            self.prec_ar,
            self.prec_ma,
        ];
        if groups.iter().any(|g| !(g.sd > 0.0) || !g.mean.is_finite()) {
            return Err(Error::Config("prior sds must be positive".into()));
        }
        if !(self.scale_sd > 0.0) {
            return Err(Error::Config("half-normal scale must be positive".into()));
        }
        if self.lkj_shape < 1.0 {
            return Err(Error::Config("LKJ shape must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_shift_by_one_sd() {
        let g = Gaussian::new(0.0, 0.3);
        assert_relative_eq!(g.log_pdf(0.3) - g.log_pdf(0.0), -0.5, epsilon = 1e-12);
        assert_relative_eq!(g.grad(0.3), -0.3 / 0.09, epsilon = 1e-12);
    }

    #[test]
    fn presets_validate() {
        Priors::simulation().validate().unwrap();
        Priors::data_fit().validate().unwrap();
    }
}
