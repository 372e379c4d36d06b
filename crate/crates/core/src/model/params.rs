//! Flattened parameter layout, named views, and the bijection between the
//! constrained parameter set and an unconstrained real vector.

use nalgebra::{DMatrix, DVector};

use crate::covariates::DesignMatrices;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ModelVariant};

/// Index bookkeeping for one model's flattened parameter vector.
///
/// Order: VAR matrices (row-major, by lag), VMA matrices, beta, gamma,
/// precision AR, precision MA, then for the Gaussian variant sigma and the
/// strict lower triangle of the correlation Cholesky factor (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub d: usize,
    pub ar_order: usize,
    pub ma_order: usize,
    pub prec_ar_order: usize,
    pub prec_ma_order: usize,
    pub r_beta: usize,
    pub r_gamma: usize,
    pub has_scale: bool,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec, designs: &DesignMatrices) -> Self {
        let tvarma = spec.variant == ModelVariant::BTVarma;
        Self {
            d: spec.n_components - 1,
            ar_order: spec.ar_order,
            ma_order: spec.ma_order,
            prec_ar_order: spec.prec_ar_order,
            prec_ma_order: spec.prec_ma_order,
            r_beta: designs.r_beta(),
            // The Gaussian variant has no precision model.
            r_gamma: if tvarma { 0 } else { designs.r_gamma() },
            has_scale: tvarma,
        }
    }

    pub fn n_corr(&self) -> usize {
        if self.has_scale {
            self.d * (self.d - 1) / 2
        } else {
            0
        }
    }

    /// Total flattened length C.
    pub fn dim(&self) -> usize {
        (self.ar_order + self.ma_order) * self.d * self.d
            + self.r_beta
            + self.r_gamma
            + self.prec_ar_order
            + self.prec_ma_order
            + if self.has_scale { 1 + self.n_corr() } else { 0 }
    }

    pub fn ar_at(&self, lag: usize) -> usize {
        lag * self.d * self.d
    }

    pub fn ma_at(&self, lag: usize) -> usize {
        (self.ar_order + lag) * self.d * self.d
    }

    pub fn beta_at(&self) -> usize {
        (self.ar_order + self.ma_order) * self.d * self.d
    }

    pub fn gamma_at(&self) -> usize {
        self.beta_at() + self.r_beta
    }

    pub fn prec_ar_at(&self) -> usize {
        self.gamma_at() + self.r_gamma
    }

    pub fn prec_ma_at(&self) -> usize {
        self.prec_ar_at() + self.prec_ar_order
    }

    pub fn sigma_at(&self) -> usize {
        self.prec_ma_at() + self.prec_ma_order
    }

    pub fn corr_at(&self) -> usize {
        self.sigma_at() + 1
    }

    /// Human-readable names aligned with the flattened layout (1-based
    /// display indices).
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for p in 0..self.ar_order {
            for r in 0..self.d {
                for c in 0..self.d {
                    names.push(format!("ar{}[{},{}]", p + 1, r + 1, c + 1));
                }
            }
        }
        for q in 0..self.ma_order {
            for r in 0..self.d {
                for c in 0..self.d {
                    names.push(format!("ma{}[{},{}]", q + 1, r + 1, c + 1));
                }
            }
        }
        for i in 0..self.r_beta {
            names.push(format!("beta[{}]", i + 1));
        }
        for i in 0..self.r_gamma {
            names.push(format!("gamma[{}]", i + 1));
        }
        for l in 0..self.prec_ar_order {
            names.push(format!("prec_ar[{}]", l + 1));
        }
        for k in 0..self.prec_ma_order {
            names.push(format!("prec_ma[{}]", k + 1));
        }
        if self.has_scale {
            names.push("sigma".into());
            for r in 1..self.d {
                for c in 0..r {
                    names.push(format!("corr_chol[{},{}]", r + 1, c + 1));
                }
            }
        }
        names
    }
}

/// One full parameter set on the constrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    /// VAR coefficient matrices A_p, each (J-1) x (J-1).
    pub ar: Vec<DMatrix<f64>>,
    /// VMA coefficient matrices B_q.
    pub ma: Vec<DMatrix<f64>>,
    /// Mean-model regression coefficients.
    pub beta: DVector<f64>,
    /// Precision-model regression coefficients (empty for the Gaussian variant).
    pub gamma: DVector<f64>,
    /// Log-precision AR coefficients alpha.
    pub prec_ar: Vec<f64>,
    /// Log-precision innovation coefficients tau.
    pub prec_ma: Vec<f64>,
    /// Scale sigma (Gaussian variant only).
    pub sigma: Option<f64>,
    /// Lower-triangular correlation Cholesky factor with unit row norms
    /// (Gaussian variant only).
    pub corr_chol: Option<DMatrix<f64>>,
}

impl ParamVector {
    /// All-zero coefficients; the Gaussian variant starts at sigma = 1 and an
    /// identity correlation factor.
    pub fn zeros(layout: &ParamLayout) -> Self {
        let d = layout.d;
        Self {
            ar: vec![DMatrix::zeros(d, d); layout.ar_order],
            ma: vec![DMatrix::zeros(d, d); layout.ma_order],
            beta: DVector::zeros(layout.r_beta),
            gamma: DVector::zeros(layout.r_gamma),
            prec_ar: vec![0.0; layout.prec_ar_order],
            prec_ma: vec![0.0; layout.prec_ma_order],
            sigma: layout.has_scale.then_some(1.0),
            corr_chol: layout.has_scale.then(|| DMatrix::identity(d, d)),
        }
    }

    /// Flattens to the constrained scale following the layout order.
    pub fn flatten(&self, layout: &ParamLayout) -> Vec<f64> {
        let mut out = Vec::with_capacity(layout.dim());
        for mat in self.ar.iter().chain(self.ma.iter()) {
            for r in 0..layout.d {
                for c in 0..layout.d {
                    out.push(mat[(r, c)]);
                }
            }
        }
        out.extend(self.beta.iter());
        out.extend(self.gamma.iter());
        out.extend(self.prec_ar.iter());
        out.extend(self.prec_ma.iter());
        if layout.has_scale {
            out.push(self.sigma.expect("scale present"));
            let l = self.corr_chol.as_ref().expect("correlation factor present");
            for r in 1..layout.d {
                for c in 0..r {
                    out.push(l[(r, c)]);
                }
            }
        }
        debug_assert_eq!(out.len(), layout.dim());
        out
    }

    /// Rebuilds a parameter set from constrained-scale values.
    pub fn from_flat(layout: &ParamLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::Config(format!(
                "expected {} values, got {}",
                layout.dim(),
                flat.len()
            )));
        }
        let d = layout.d;
        let read_mat = |at: usize| DMatrix::from_fn(d, d, |r, c| flat[at + r * d + c]);
        let ar = (0..layout.ar_order).map(|p| read_mat(layout.ar_at(p))).collect();
        let ma = (0..layout.ma_order).map(|q| read_mat(layout.ma_at(q))).collect();
        let beta = DVector::from_iterator(
            layout.r_beta,
            flat[layout.beta_at()..layout.beta_at() + layout.r_beta].iter().copied(),
        );
        let gamma = DVector::from_iterator(
            layout.r_gamma,
            flat[layout.gamma_at()..layout.gamma_at() + layout.r_gamma].iter().copied(),
        );
        let prec_ar = flat[layout.prec_ar_at()..layout.prec_ar_at() + layout.prec_ar_order].to_vec();
        let prec_ma = flat[layout.prec_ma_at()..layout.prec_ma_at() + layout.prec_ma_order].to_vec();
        let (sigma, corr_chol) = if layout.has_scale {
            let sigma = flat[layout.sigma_at()];
            if !(sigma > 0.0) {
                return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
            }
            let mut l = DMatrix::zeros(d, d);
            l[(0, 0)] = 1.0;
            let mut idx = layout.corr_at();
            for r in 1..d {
                let mut sum_sq: f64 = 0.0;
                for c in 0..r {
                    l[(r, c)] = flat[idx];
                    sum_sq += flat[idx] * flat[idx];
                    idx += 1;
                }
                if sum_sq >= 1.0 {
                    return Err(Error::Domain(format!(
                        "correlation factor row {} has norm above 1",
                        r + 1
                    )));
                }
                l[(r, r)] = (1.0 - sum_sq).sqrt();
            }
            (Some(sigma), Some(l))
        } else {
            (None, None)
        };
        Ok(Self { ar, ma, beta, gamma, prec_ar, prec_ma, sigma, corr_chol })
    }

    /// Maps to the unconstrained vector: identity on regression and dynamics
    /// coefficients, log on sigma, and the tanh-based row construction on the
    /// correlation Cholesky factor.
    pub fn unconstrain(&self, layout: &ParamLayout) -> Vec<f64> {
        let mut out = self.flatten(layout);
        if layout.has_scale {
            out[layout.sigma_at()] = self.sigma.expect("scale present").ln();
            let l = self.corr_chol.as_ref().expect("correlation factor present");
            let mut idx = layout.corr_at();
            for r in 1..layout.d {
                let mut sum_sq: f64 = 0.0;
                for c in 0..r {
                    let partial = (1.0 - sum_sq).sqrt();
                    let z = l[(r, c)] / partial;
                    out[idx] = z.atanh();
                    idx += 1;
                    sum_sq += l[(r, c)] * l[(r, c)];
                }
            }
        }
        out
    }

    /// Inverse of [`Self::unconstrain`]; also returns the log absolute
    /// determinant of the transform's Jacobian, which the unconstrained-space
    /// posterior adds to the constrained-space density.
    pub fn constrain(layout: &ParamLayout, x: &[f64]) -> Result<(Self, f64)> {
        if x.len() != layout.dim() {
            return Err(Error::Config(format!(
                "expected {} values, got {}",
                layout.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite unconstrained value".into()));
        }
        let mut log_jac = 0.0;
        let mut flat = x.to_vec();
        if layout.has_scale {
            let s = x[layout.sigma_at()];
            flat[layout.sigma_at()] = s.exp();
            log_jac += s;
            let d = layout.d;
            let mut idx = layout.corr_at();
            for r in 1..d {
                let mut sum_sq: f64 = 0.0;
                for _c in 0..r {
                    let z = x[idx].tanh();
                    let partial = (1.0 - sum_sq).sqrt();
                    let entry = z * partial;
                    log_jac += (1.0 - z * z).ln() + 0.5 * (1.0 - sum_sq).ln();
                    flat[idx] = entry;
                    sum_sq += entry * entry;
                    idx += 1;
                }
            }
        }
        let params = Self::from_flat(layout, &flat)?;
        Ok((params, log_jac))
    }
}
