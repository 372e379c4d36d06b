//! Deterministic design construction: intercept, scaled trend, and Fourier
//! seasonal harmonics for the mean and precision models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a design column represents; drives prior assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateClass {
    Intercept,
    Trend,
    Fourier,
}

/// One seasonal block: `harmonics` sine/cosine pairs at the given period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalBlock {
    pub period: f64,
    pub harmonics: usize,
}

/// Declarative description of one design (mean or precision side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub include_intercept: bool,
    pub include_trend: bool,
    #[serde(default)]
    pub seasonal_blocks: Vec<SeasonalBlock>,
    /// When true the mean model shares one coefficient vector across all
    /// ALR coordinates instead of giving each its own block.
    #[serde(default)]
    pub share_across_components: bool,
}

impl CovariateSpec {
    pub fn intercept_only() -> Self {
        Self {
            include_intercept: true,
            include_trend: false,
            seasonal_blocks: Vec::new(),
            share_across_components: false,
        }
    }

    /// Weekly + yearly harmonics with trend and intercept.
    pub fn seasonal(weekly_harmonics: usize, yearly_harmonics: usize) -> Self {
        Self {
            include_intercept: true,
            include_trend: true,
            seasonal_blocks: vec![
                SeasonalBlock { period: 7.0, harmonics: weekly_harmonics },
                SeasonalBlock { period: 365.25, harmonics: yearly_harmonics },
            ],
            share_across_components: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for block in &self.seasonal_blocks {
            if !(block.period > 1.0) {
                return Err(Error::Config(format!(
                    "seasonal period must exceed 1, got {}",
                    block.period
                )));
            }
            if block.harmonics as f64 > block.period / 2.0 {
                return Err(Error::Config(format!(
                    "{} harmonics exceed period {} / 2",
                    block.harmonics, block.period
                )));
            }
        }
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.include_intercept as usize
            + self.include_trend as usize
            + 2 * self.seasonal_blocks.iter().map(|b| b.harmonics).sum::<usize>()
    }

    fn column_classes(&self) -> Vec<CovariateClass> {
        let mut classes = Vec::with_capacity(self.n_columns());
        if self.include_intercept {
            classes.push(CovariateClass::Intercept);
        }
        if self.include_trend {
            classes.push(CovariateClass::Trend);
        }
        for block in &self.seasonal_blocks {
            for _ in 0..2 * block.harmonics {
                classes.push(CovariateClass::Fourier);
            }
        }
        classes
    }

    fn row(&self, abs_t: usize, trend_scale: f64) -> DVector<f64> {
        let mut row = Vec::with_capacity(self.n_columns());
        if self.include_intercept {
            row.push(1.0);
        }
        if self.include_trend {
            row.push(abs_t as f64 / trend_scale);
        }
        for block in &self.seasonal_blocks {
            for k in 1..=block.harmonics {
                let angle = 2.0 * std::f64::consts::PI * k as f64 * abs_t as f64 / block.period;
                row.push(angle.sin());
                row.push(angle.cos());
            }
        }
        DVector::from_vec(row)
    }
}

/// Built design rows for a contiguous time span.
///
/// The mean-model matrix `X_t` has block structure: each ALR coordinate gets
/// its own copy of the per-period covariate row (or one shared copy when
/// `share_across_components` is set). Rows are stored compactly; `mean_matrix`
/// materializes the full `(J-1) x r_beta` matrix on demand.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    d: usize,
    shared: bool,
    mean_rows: Vec<DVector<f64>>,
    prec_rows: Vec<DVector<f64>>,
    mean_classes: Vec<CovariateClass>,
    prec_classes: Vec<CovariateClass>,
}

/// Builds mean and precision designs for `len` periods starting at absolute
/// index `t0`. `trend_scale` is the training length so the trend coefficient
/// is a per-training-span slope; passing `t0 > 0` continues the phase of an
/// earlier build, which keeps seasonal columns consistent across splits.
pub fn build_designs(
    spec_mean: &CovariateSpec,
    spec_prec: &CovariateSpec,
    len: usize,
    n_components: usize,
    t0: usize,
    trend_scale: f64,
) -> Result<DesignMatrices> {
    if len == 0 {
        return Err(Error::Config("design span must be non-empty".into()));
    }
    if n_components < 2 {
        return Err(Error::Config("need at least 2 components".into()));
    }
    if !(trend_scale > 0.0) {
        return Err(Error::Config("trend scale must be positive".into()));
    }
    spec_mean.validate()?;
    spec_prec.validate()?;
    let mean_rows = (0..len).map(|t| spec_mean.row(t0 + t, trend_scale)).collect();
    let prec_rows = (0..len).map(|t| spec_prec.row(t0 + t, trend_scale)).collect();
    Ok(DesignMatrices {
        d: n_components - 1,
        shared: spec_mean.share_across_components,
        mean_rows,
        prec_rows,
        mean_classes: spec_mean.column_classes(),
        prec_classes: spec_prec.column_classes(),
    })
}

impl DesignMatrices {
    pub fn len(&self) -> usize {
        self.mean_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_rows.is_empty()
    }

    pub fn n_coords(&self) -> usize {
        self.d
    }

    pub fn mean_columns(&self) -> usize {
        self.mean_classes.len()
    }

    /// Total mean-model coefficient count r_beta.
    pub fn r_beta(&self) -> usize {
        if self.shared {
            self.mean_classes.len()
        } else {
            self.d * self.mean_classes.len()
        }
    }

    /// Precision-model coefficient count r_gamma.
    pub fn r_gamma(&self) -> usize {
        self.prec_classes.len()
    }

    /// Prior class of mean coefficient `idx` (an index into beta).
    pub fn beta_class(&self, idx: usize) -> CovariateClass {
        if self.shared {
            self.mean_classes[idx]
        } else {
            self.mean_classes[idx % self.mean_classes.len()]
        }
    }

    pub fn gamma_class(&self, idx: usize) -> CovariateClass {
        self.prec_classes[idx]
    }

    pub fn mean_row(&self, t: usize) -> &DVector<f64> {
        &self.mean_rows[t]
    }

    pub fn prec_row(&self, t: usize) -> &DVector<f64> {
        &self.prec_rows[t]
    }

    /// `X_t beta` as a (J-1)-vector.
    pub fn mean_effect(&self, t: usize, beta: &DVector<f64>) -> DVector<f64> {
        let row = &self.mean_rows[t];
        let n = row.len();
        if self.shared {
            let v = row.dot(beta);
            DVector::from_element(self.d, v)
        } else {
            DVector::from_fn(self.d, |i, _| {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += beta[i * n + c] * row[c];
                }
                acc
            })
        }
    }

    /// `z_t' gamma`.
    pub fn prec_effect(&self, t: usize, gamma: &DVector<f64>) -> f64 {
        self.prec_rows[t].dot(gamma)
    }

    /// Accumulates `X_t' adj` into `out` (length r_beta).
    pub fn add_mean_gradient(&self, t: usize, adj: &DVector<f64>, out: &mut [f64]) {
        let row = &self.mean_rows[t];
        let n = row.len();
        if self.shared {
            let s: f64 = adj.iter().sum();
            for c in 0..n {
                out[c] += s * row[c];
            }
        } else {
            for i in 0..self.d {
                let a = adj[i];
                for c in 0..n {
                    out[i * n + c] += a * row[c];
                }
            }
        }
    }

    /// Materializes the full `(J-1) x r_beta` mean design matrix at `t`.
    pub fn mean_matrix(&self, t: usize) -> DMatrix<f64> {
        let row = &self.mean_rows[t];
        let n = row.len();
        if self.shared {
            DMatrix::from_fn(self.d, n, |_, c| row[c])
        } else {
            DMatrix::from_fn(self.d, self.d * n, |i, j| {
                if j / n == i {
                    row[j % n]
                } else {
                    0.0
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn intercept_only_shapes() {
        let spec = CovariateSpec::intercept_only();
        let designs = build_designs(&spec, &spec, 10, 5, 0, 10.0).unwrap();
        assert_eq!(designs.r_beta(), 4);
        assert_eq!(designs.r_gamma(), 1);
        let x = designs.mean_matrix(3);
        assert_eq!(x.shape(), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(x[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn weekly_block_periodicity() {
        let spec = CovariateSpec {
            include_intercept: false,
            include_trend: false,
            seasonal_blocks: vec![SeasonalBlock { period: 7.0, harmonics: 3 }],
            share_across_components: false,
        };
        let designs = build_designs(&spec, &CovariateSpec::intercept_only(), 30, 3, 0, 30.0).unwrap();
        assert_eq!(designs.mean_columns(), 6);
        for t in 0..20 {
            let a = designs.mean_row(t);
            let b = designs.mean_row(t + 7);
            for c in 0..6 {
                assert_relative_eq!(a[c], b[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn yearly_columns_nearly_orthogonal() {
        let spec = CovariateSpec {
            include_intercept: false,
            include_trend: false,
            seasonal_blocks: vec![SeasonalBlock { period: 365.25, harmonics: 8 }],
            share_across_components: false,
        };
        let len = 3652;
        let designs = build_designs(&spec, &CovariateSpec::intercept_only(), len, 3, 0, len as f64).unwrap();
        let cols = designs.mean_columns();
        let mut gram = vec![vec![0.0; cols]; cols];
        for t in 0..len {
            let row = designs.mean_row(t);
            for i in 0..cols {
                for k in 0..cols {
                    gram[i][k] += row[i] * row[k];
                }
            }
        }
        for i in 0..cols {
            for k in 0..cols {
                if i != k {
                    let normalized = gram[i][k] / (gram[i][i].sqrt() * gram[k][k].sqrt());
                    assert!(normalized.abs() < 0.02, "gram[{i}][{k}] = {normalized}");
                }
            }
        }
    }

    #[test]
    fn extension_preserves_earlier_rows() {
        let spec = CovariateSpec::seasonal(2, 4);
        let short = build_designs(&spec, &spec, 50, 4, 0, 50.0).unwrap();
        let long = build_designs(&spec, &spec, 80, 4, 0, 50.0).unwrap();
        for t in 0..50 {
            for c in 0..short.mean_columns() {
                assert_eq!(short.mean_row(t)[c], long.mean_row(t)[c]);
            }
        }
        // A continuation build anchored at t0 = 50 matches the long build.
        let cont = build_designs(&spec, &spec, 30, 4, 50, 50.0).unwrap();
        for t in 0..30 {
            for c in 0..cont.mean_columns() {
                assert_relative_eq!(cont.mean_row(t)[c], long.mean_row(50 + t)[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn trend_is_monotone() {
        let spec = CovariateSpec {
            include_intercept: true,
            include_trend: true,
            seasonal_blocks: vec![],
            share_across_components: false,
        };
        let designs = build_designs(&spec, &spec, 40, 3, 0, 40.0).unwrap();
        for t in 1..40 {
            assert!(designs.mean_row(t)[1] > designs.mean_row(t - 1)[1]);
        }
        assert_relative_eq!(designs.mean_row(39)[1], 39.0 / 40.0, epsilon = 1e-15);
    }

    #[test]
    fn too_many_harmonics_rejected() {
        let spec = CovariateSpec {
            include_intercept: true,
            include_trend: false,
            seasonal_blocks: vec![SeasonalBlock { period: 7.0, harmonics: 4 }],
            share_across_components: false,
        };
        assert!(build_designs(&spec, &spec, 10, 3, 0, 10.0).is_err());
    }

    #[test]
    fn shared_coefficients_reduce_dimension() {
        let mut spec = CovariateSpec::intercept_only();
        spec.share_across_components = true;
        let designs = build_designs(&spec, &CovariateSpec::intercept_only(), 5, 5, 0, 5.0).unwrap();
        assert_eq!(designs.r_beta(), 1);
        let beta = DVector::from_vec(vec![2.5]);
        let eff = designs.mean_effect(0, &beta);
        assert!(eff.iter().all(|&v| v == 2.5));
    }
}
