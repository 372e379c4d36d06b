//! Simulation studies: data-generating processes, shock injection, regime
//! shifts, and the replication runner that fits all three models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositional::{alr, alr_inv, close, AlrVector, Composition, CompositionalSeries};
use crate::covariates::{build_designs, CovariateSpec};
use crate::dirichlet;
use crate::error::{Error, Result};
use crate::forecast;
use crate::inference::{sample_posterior, SamplerConfig};
use crate::metrics::{self, MetricsReport};
use crate::model::{latent_path, ModelSpec, ModelVariant, ParamLayout, Priors, LOG_PHI_LIMIT};

/// Which observation law generates the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpKind {
    /// Dirichlet with constant log precision.
    Darma,
    /// Dirichlet with the ARCH-style log-precision recursion.
    Darch,
    /// Gaussian VARMA on the transformed data.
    TVarma,
}

/// Study layout: studies 1-3 inject shocks, studies 4-6 insert a temporary
/// regime shift; the generator cycles Darma, Darch, tVarma in both halves.
pub fn study_design(study_id: usize) -> Result<(DgpKind, bool, bool)> {
    let kind = match study_id {
        1 | 4 => DgpKind::Darma,
        2 | 5 => DgpKind::Darch,
        3 | 6 => DgpKind::TVarma,
        other => {
            return Err(Error::Config(format!(
                "study id must lie in 1..=6, got {other}"
            )))
        }
    };
    let regime = study_id >= 4;
    Ok((kind, regime, !regime))
}

/// One study's run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: usize,
    pub n_replicates: usize,
    pub t_len: usize,
    pub train_len: usize,
    pub n_components: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(study_id: usize, n_replicates: usize, seed: u64) -> Self {
        Self { study_id, n_replicates, t_len: 100, train_len: 60, n_components: 5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        study_design(self.study_id)?;
        if self.train_len >= self.t_len {
            return Err(Error::Config("training length must be below the series length".into()));
        }
        if self.n_components < 2 {
            return Err(Error::Config("need at least 2 components".into()));
        }
        if self.n_replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        Ok(())
    }
}

/// True parameters of one generated dataset.
#[derive(Debug, Clone)]
pub struct DgpParams {
    /// VAR matrix, (J-1) x (J-1).
    pub ar: DMatrix<f64>,
    /// ALR-space intercept.
    pub beta: DVector<f64>,
    /// Constant log precision (Dirichlet generators).
    pub log_phi0: Option<f64>,
    /// Log-precision AR coefficient (Darch).
    pub prec_ar: f64,
    /// Log-precision innovation coefficient (Darch).
    pub prec_ma: f64,
    /// Scale (tVarma).
    pub sigma: Option<f64>,
    /// Cholesky factor of the covariance shape matrix (tVarma).
    pub cov_chol: Option<DMatrix<f64>>,
    /// Draws discarded to reach a usable parameter set.
    pub redraws: usize,
}

/// Draws one parameter set from the published supports.
pub fn draw_dgp_params(
    kind: DgpKind,
    cfg: &StudyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DgpParams> {
    let j = cfg.n_components;
    let d = j - 1;
    let mut redraws = 0usize;
    let ar = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.75..0.75));
    let beta = loop {
        let raw: Vec<f64> = (0..j)
            .map(|_| Normal::new(0.2, 0.03).unwrap().sample(rng))
            .collect();
        if raw.iter().all(|&v| v > 0.0) {
            let c = close(&raw)?;
            let b = alr(&c, j - 1)?;
            break DVector::from_vec(b.values().to_vec());
        }
        redraws += 1;
        if redraws > 1000 {
            return Err(Error::Domain("could not draw a positive intercept".into()));
        }
    };
    let mut params = DgpParams {
        ar,
        beta,
        log_phi0: None,
        prec_ar: 0.0,
        prec_ma: 0.0,
        sigma: None,
        cov_chol: None,
        redraws,
    };
    match kind {
        DgpKind::Darma => {
            params.log_phi0 = Some(rng.gen_range(6.0..7.5));
        }
        DgpKind::Darch => {
            params.log_phi0 = Some(rng.gen_range(6.0..7.5));
            params.prec_ar = 0.8;
            params.prec_ma = -0.95;
        }
        DgpKind::TVarma => {
            params.sigma = Some(rng.gen_range(0.05..0.5));
            loop {
                let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.3..0.3));
                let cov = m.transpose() * &m;
                if let Some(chol) = nalgebra::Cholesky::new(cov) {
                    params.cov_chol = Some(chol.l());
                    break;
                }
                params.redraws += 1;
                if params.redraws > 1000 {
                    return Err(Error::Domain("could not draw a positive-definite shape".into()));
                }
            }
        }
    }
    Ok(params)
}

/// A temporary parameter redraw over a fixed-length window.
#[derive(Debug, Clone)]
pub struct RegimeSchedule {
    pub base: DgpParams,
    pub shifted: Option<DgpParams>,
    /// 0-based index of the first shifted observation.
    pub start_index: usize,
    pub window_len: usize,
}

impl RegimeSchedule {
    pub fn constant(base: DgpParams) -> Self {
        Self { base, shifted: None, start_index: 0, window_len: 0 }
    }

    pub fn params_at(&self, t: usize) -> &DgpParams {
        match &self.shifted {
            Some(shifted) if t >= self.start_index && t < self.start_index + self.window_len => {
                shifted
            }
            _ => &self.base,
        }
    }

    /// 1-based shift time, when a shift is present.
    pub fn shift_time(&self) -> Option<usize> {
        self.shifted.as_ref().map(|_| self.start_index + 1)
    }
}

/// Redraws all generator parameters over a ten-step window starting at a
/// time drawn uniformly from 10..=50 (1-based).
pub fn apply_regime_shift(
    kind: DgpKind,
    base: DgpParams,
    cfg: &StudyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RegimeSchedule> {
    let t_shift = rng.gen_range(10..=50usize);
    let shifted = draw_dgp_params(kind, cfg, rng)?;
    Ok(RegimeSchedule {
        base,
        shifted: Some(shifted),
        start_index: t_shift - 1,
        window_len: 10,
    })
}

/// Forward-simulates one dataset under a (possibly piecewise) parameter
/// schedule. Initial shares start near equal and the first predictor is
/// pinned to the first observation, so the first precision innovation
/// vanishes.
pub fn generate_series_with_schedule(
    kind: DgpKind,
    schedule: &RegimeSchedule,
    t_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CompositionalSeries> {
    let j = schedule.base.beta.len() + 1;
    let mut rows: Vec<Composition> = Vec::with_capacity(t_len);
    let first = loop {
        let raw: Vec<f64> = (0..j)
            .map(|_| 0.2 + Normal::new(0.0, 0.01).unwrap().sample(rng))
            .collect();
        if raw.iter().all(|&v| v > 0.0) {
            break close(&raw)?;
        }
    };
    let mut alr_prev = DVector::from_vec(alr(&first, j - 1)?.values().to_vec());
    let mut eta_prev = alr_prev.clone();
    let mut log_phi_prev = schedule.base.log_phi0.unwrap_or(0.0);
    rows.push(first);

    for t in 1..t_len {
        let p = schedule.params_at(t);
        let eta = &p.beta + &p.ar * (&alr_prev - &p.beta);
        let y = match kind {
            DgpKind::Darma => {
                let mu = alr_to_mean(&eta, j);
                let phi = p.log_phi0.expect("precision present").exp();
                dirichlet::sample(&dirichlet::DirichletParams::new(mu, phi)?, rng)
            }
            DgpKind::Darch => {
                let phi0 = p.log_phi0.expect("precision present");
                let innov = (&alr_prev - &eta_prev).norm_squared();
                let mut w = phi0 + p.prec_ar * (log_phi_prev - phi0) + p.prec_ma * innov;
                w = w.clamp(-LOG_PHI_LIMIT, LOG_PHI_LIMIT);
                log_phi_prev = w;
                let mu = alr_to_mean(&eta, j);
                dirichlet::sample(&dirichlet::DirichletParams::new(mu, w.exp())?, rng)
            }
            DgpKind::TVarma => {
                let sigma = p.sigma.expect("scale present");
                let l = p.cov_chol.as_ref().expect("shape factor present");
                let z = DVector::from_fn(j - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let a_obs = &eta + (l * z) * sigma;
                let v = AlrVector::new(a_obs.iter().copied().collect(), j - 1)?;
                alr_inv(&v)
            }
        };
        alr_prev = DVector::from_vec(alr(&y, j - 1)?.values().to_vec());
        eta_prev = eta;
        rows.push(y);
    }
    CompositionalSeries::with_default_index(rows)
}

/// Convenience wrapper for a constant parameter schedule.
pub fn generate_series(
    kind: DgpKind,
    params: &DgpParams,
    t_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CompositionalSeries> {
    generate_series_with_schedule(kind, &RegimeSchedule::constant(params.clone()), t_len, rng)
}

fn alr_to_mean(eta: &DVector<f64>, j: usize) -> Composition {
    let v = AlrVector::new(eta.iter().copied().collect(), j - 1).expect("finite predictor");
    alr_inv(&v)
}

/// Replaces rows at Poisson-spaced times within the training span by closed
/// uniform draws, returning the (strictly increasing, 0-based) shock times.
pub fn inject_shocks(
    series: &mut CompositionalSeries,
    train_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let j = series.n_components();
    let poisson = Poisson::new(6.0).unwrap();
    let mut times = Vec::new();
    let mut t_cum = 0usize;
    for _ in 0..10 * train_len.max(1) {
        let interval = poisson.sample(rng) as usize;
        if interval == 0 {
            continue;
        }
        t_cum += interval;
        if t_cum > train_len {
            break;
        }
        let raw: Vec<f64> = (0..j).map(|_| rng.gen::<f64>().max(1e-12)).collect();
        let replacement = close(&raw).expect("positive draws");
        series.set_row(t_cum - 1, replacement);
        times.push(t_cum - 1);
    }
    times
}

/// The three fitted comparison models at the orders used throughout the
/// studies: VAR(1) mean for all, plus a (1,1) precision recursion for the
/// DARCH variant.
pub fn comparison_specs(n_components: usize) -> Vec<ModelSpec> {
    let base = |variant, l, k| ModelSpec {
        variant,
        n_components,
        ar_order: 1,
        ma_order: 0,
        prec_ar_order: l,
        prec_ma_order: k,
        ref_index: n_components - 1,
        mean_covariates: CovariateSpec::intercept_only(),
        prec_covariates: CovariateSpec::intercept_only(),
    };
    vec![
        base(ModelVariant::BDarma, 0, 0),
        base(ModelVariant::BDarmaDarch, 1, 1),
        base(ModelVariant::BTVarma, 0, 0),
    ]
}

/// One model's outcome within a replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: String,
    pub metrics: MetricsReport,
    /// PACF of the in-sample SSR series at the posterior-mean parameters.
    pub ssr_pacf: Vec<f64>,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub divergences: usize,
}

/// One replicate: the generated dataset's events and each model's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub shock_times: Vec<usize>,
    pub regime_shift_time: Option<usize>,
    pub models: Vec<ModelOutcome>,
}

/// Aggregated study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub replicates: Vec<ReplicateResult>,
    /// Replicates dropped because a model failed to fit.
    pub failures: usize,
    /// Mean SSR-PACF by model across completed replicates.
    pub mean_pacf: Vec<(String, Vec<f64>)>,
}

pub const SSR_PACF_MAX_LAG: usize = 20;

/// Runs one full study: per replicate, generate data, apply the study's
/// events, fit the three comparison models, forecast the test window, and
/// evaluate. Replicates run in parallel on seeds derived from the study seed,
/// so reruns reproduce identical results.
pub fn run_study(cfg: &StudyConfig, sampler: &SamplerConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let results: Vec<(usize, Result<ReplicateResult>)> = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|r| (r, run_replicate(cfg, sampler, r)))
        .collect();
    let mut replicates = Vec::new();
    let mut failures = 0usize;
    for (_, res) in results {
        match res {
            Ok(rep) => replicates.push(rep),
            Err(_) => failures += 1,
        }
    }
    if replicates.is_empty() {
        return Err(Error::Init("every replicate failed".into()));
    }
    let model_names: Vec<String> = replicates[0].models.iter().map(|m| m.model.clone()).collect();
    let mut mean_pacf = Vec::new();
    for (mi, name) in model_names.iter().enumerate() {
        let mut acc = vec![0.0; SSR_PACF_MAX_LAG];
        for rep in &replicates {
            for (lag, &v) in rep.models[mi].ssr_pacf.iter().enumerate() {
                acc[lag] += v;
            }
        }
        for v in &mut acc {
            *v /= replicates.len() as f64;
        }
        mean_pacf.push((name.clone(), acc));
    }
    Ok(StudyResult { config: cfg.clone(), replicates, failures, mean_pacf })
}

fn run_replicate(
    cfg: &StudyConfig,
    sampler: &SamplerConfig,
    replicate: usize,
) -> Result<ReplicateResult> {
    let (kind, regime, shocks) = study_design(cfg.study_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x5EED_0000 + replicate as u64);

    let base = draw_dgp_params(kind, cfg, &mut rng)?;
    let schedule = if regime {
        apply_regime_shift(kind, base, cfg, &mut rng)?
    } else {
        RegimeSchedule::constant(base)
    };
    let mut series = generate_series_with_schedule(kind, &schedule, cfg.t_len, &mut rng)?;
    let shock_times = if shocks {
        inject_shocks(&mut series, cfg.train_len, &mut rng)
    } else {
        Vec::new()
    };

    let train = series.head(cfg.train_len);
    let horizon = cfg.t_len - cfg.train_len;
    let actual: Vec<Vec<f64>> = series.rows()[cfg.train_len..]
        .iter()
        .map(|r| r.values().to_vec())
        .collect();

    let mut models = Vec::new();
    for (mi, spec) in comparison_specs(cfg.n_components).into_iter().enumerate() {
        let designs = build_designs(
            &spec.mean_covariates,
            &spec.prec_covariates,
            cfg.t_len,
            cfg.n_components,
            0,
            cfg.train_len as f64,
        )?;
        let fit_cfg = SamplerConfig {
            base_seed: cfg
                .seed
                .wrapping_add(7919 * replicate as u64)
                .wrapping_add(97 * mi as u64),
            ..sampler.clone()
        };
        let (draws, diag) = sample_posterior(&spec, &Priors::simulation(), &train, &designs, &fit_cfg)?;
        let result = forecast::predict(&spec, &draws, &train, &designs, horizon, fit_cfg.base_seed ^ 0xF0CA)?;
        let bounds = forecast::interval(&result, 0.95)?;
        let metrics = metrics::evaluate_forecast(
            &actual,
            &result.point,
            Some((&bounds.lower, &bounds.upper)),
            100.0,
        )?;

        // In-sample residual autocorrelation at the posterior mean.
        let layout = ParamLayout::new(&spec, &designs);
        let mean_params = draws.mean_params(&layout)?;
        let train_data = crate::model::prepare(&train, spec.ref_index)?;
        let path = latent_path(&spec, &mean_params, &train_data, &designs)?;
        let ssr = metrics::ssr_series(&spec, &mean_params, &train_data, &path, spec.max_lag())?;
        let ssr_pacf = metrics::pacf(&ssr, SSR_PACF_MAX_LAG)?;

        models.push(ModelOutcome {
            model: spec.variant.to_string(),
            metrics,
            ssr_pacf,
            max_rhat: diag.max_rhat(),
            min_ess: diag.min_ess(),
            divergences: diag.divergences,
        });
    }

    Ok(ReplicateResult {
        replicate,
        shock_times,
        regime_shift_time: schedule.shift_time(),
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(study: usize) -> StudyConfig {
        StudyConfig::new(study, 1, 11)
    }

    #[test]
    fn parameter_supports_match_published_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for study in [1usize, 2, 3] {
            let (kind, _, _) = study_design(study).unwrap();
            for _ in 0..50 {
                let p = draw_dgp_params(kind, &cfg(study), &mut rng).unwrap();
                assert!(p.ar.iter().all(|&v| (-0.75..0.75).contains(&v)));
                if let Some(lp) = p.log_phi0 {
                    assert!((6.0..7.5).contains(&lp));
                }
                if kind == DgpKind::Darch {
                    assert_eq!(p.prec_ar, 0.8);
                    assert_eq!(p.prec_ma, -0.95);
                }
                if let Some(s) = p.sigma {
                    assert!((0.05..0.5).contains(&s));
                }
                if let Some(l) = &p.cov_chol {
                    // Gram construction: reconstructed covariance is PSD.
                    let cov = l * l.transpose();
                    let eig = cov.symmetric_eigenvalues();
                    assert!(eig.iter().all(|&e| e >= -1e-12));
                }
            }
        }
    }

    #[test]
    fn generated_rows_are_valid_compositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for study in [1usize, 2, 3] {
            let (kind, _, _) = study_design(study).unwrap();
            let p = draw_dgp_params(kind, &cfg(study), &mut rng).unwrap();
            let series = generate_series(kind, &p, 100, &mut rng).unwrap();
            assert_eq!(series.len(), 100);
            for row in series.rows() {
                assert!((row.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn darma_marginal_mean_matches_intercept() {
        // Zero VAR: the level of each component tracks the closed intercept.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = draw_dgp_params(DgpKind::Darma, &cfg(1), &mut rng).unwrap();
        p.ar.fill(0.0);
        p.log_phi0 = Some(7.0);
        let series = generate_series(DgpKind::Darma, &p, 10_000, &mut rng).unwrap();
        let j = 5;
        let expect = alr_inv(
            &AlrVector::new(p.beta.iter().copied().collect(), j - 1).unwrap(),
        );
        for c in 0..j {
            let mean: f64 =
                series.rows().iter().map(|r| r.values()[c]).sum::<f64>() / series.len() as f64;
            assert!(
                (mean - expect.values()[c]).abs() < 0.01,
                "component {c}: {mean} vs {}",
                expect.values()[c]
            );
        }
    }

    #[test]
    fn darch_with_zero_dynamics_reduces_to_darma() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = draw_dgp_params(DgpKind::Darch, &cfg(2), &mut rng).unwrap();
        p.prec_ar = 0.0;
        p.prec_ma = 0.0;
        let mut rng_a = ChaCha8Rng::seed_from_u64(42);
        let mut rng_b = ChaCha8Rng::seed_from_u64(42);
        let a = generate_series(DgpKind::Darch, &p, 200, &mut rng_a).unwrap();
        let b = generate_series(DgpKind::Darma, &p, 200, &mut rng_b).unwrap();
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            for (va, vb) in ra.values().iter().zip(rb.values()) {
                assert_relative_eq!(va, vb, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn shock_times_strictly_increasing_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = draw_dgp_params(DgpKind::Darma, &cfg(1), &mut rng).unwrap();
        let mut total = 0usize;
        let runs = 200;
        for _ in 0..runs {
            let mut series = generate_series(DgpKind::Darma, &p, 100, &mut rng).unwrap();
            let times = inject_shocks(&mut series, 60, &mut rng);
            total += times.len();
            for w in times.windows(2) {
                assert!(w[0] < w[1]);
            }
            assert!(times.iter().all(|&t| t < 60));
            for &t in &times {
                assert!((series.row(t).values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        // Expected count is train_len / 6 = 10; allow ±30%.
        let mean = total as f64 / runs as f64;
        assert!((7.0..13.0).contains(&mean), "mean shock count {mean}");
    }

    #[test]
    fn regime_shift_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let base = draw_dgp_params(DgpKind::Darma, &cfg(4), &mut rng).unwrap();
            let base_ar = base.ar.clone();
            let schedule = apply_regime_shift(DgpKind::Darma, base, &cfg(4), &mut rng).unwrap();
            let t_shift = schedule.shift_time().unwrap();
            assert!((10..=50).contains(&t_shift));
            assert_eq!(schedule.window_len, 10);
            // Parameters revert bit-identically after the window.
            let after = schedule.params_at(schedule.start_index + 10);
            assert_eq!(after.ar, base_ar);
            let inside = schedule.params_at(schedule.start_index + 9);
            assert_ne!(inside.ar, base_ar);
        }
    }

    #[test]
    fn study_design_table() {
        assert!(study_design(0).is_err());
        assert!(study_design(7).is_err());
        assert_eq!(study_design(2).unwrap(), (DgpKind::Darch, false, true));
        assert_eq!(study_design(5).unwrap(), (DgpKind::Darch, true, false));
        assert_eq!(study_design(6).unwrap(), (DgpKind::TVarma, true, false));
    }

    #[test]
    fn seeded_study_is_reproducible() {
        let cfg = StudyConfig { n_replicates: 1, ..StudyConfig::new(1, 1, 77) };
        let sampler = SamplerConfig {
            n_chains: 2,
            n_warmup: 150,
            n_keep: 150,
            ..Default::default()
        };
        let a = run_study(&cfg, &sampler).unwrap();
        let b = run_study(&cfg, &sampler).unwrap();
        assert_eq!(a.replicates.len(), b.replicates.len());
        let ma = &a.replicates[0].models;
        let mb = &b.replicates[0].models;
        for (x, y) in ma.iter().zip(mb) {
            assert_eq!(x.metrics.frmse.mean, y.metrics.frmse.mean);
            assert_eq!(x.ssr_pacf, y.ssr_pacf);
        }
    }
}
