//! Posterior-predictive simulation of future compositions and credible
//! interval summaries.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::compositional::{alr, alr_inv, AlrVector, CompositionalSeries};
use crate::covariates::DesignMatrices;
use crate::dirichlet;
use crate::error::{Error, Result};
use crate::inference::PosteriorDraws;
use crate::model::{
    latent_path, mean_from_eta, ModelSpec, ParamLayout, ParamVector, PreparedData,
    LOG_PHI_LIMIT,
};

/// Joint predictive simulation over a forecast horizon.
#[derive(Debug, Clone)]
pub struct ForecastResult {
    pub horizon: usize,
    pub n_components: usize,
    /// Simulated future observations, `[draw][step][component]`.
    pub paths: Vec<Vec<Vec<f64>>>,
    /// Per-draw mean compositions alongside each sampled step.
    pub mean_paths: Vec<Vec<Vec<f64>>>,
    /// Point forecast: posterior mean of the mean composition.
    pub point: Vec<Vec<f64>>,
    /// Alternative point forecast: mean of the sampled observations.
    pub sampled_mean: Vec<Vec<f64>>,
    /// Paths dropped after one resampling attempt.
    pub invalid_paths: usize,
}

/// Equal-tailed interval bounds per (step, component).
#[derive(Debug, Clone)]
pub struct IntervalSet {
    pub level: f64,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// Set when fewer than 100 draws back the quantiles.
    pub low_draw_warning: bool,
}

/// Rolls both recursions forward one draw at a time, sampling each future
/// observation from the fitted observation law and feeding it back into the
/// lags. Draw workers own independent RNG streams keyed by draw index, so
/// output does not depend on scheduling.
pub fn predict(
    spec: &ModelSpec,
    draws: &PosteriorDraws,
    series: &CompositionalSeries,
    designs: &DesignMatrices,
    horizon: usize,
    seed: u64,
) -> Result<ForecastResult> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be positive".into()));
    }
    let t_train = series.len();
    if designs.len() < t_train + horizon {
        return Err(Error::Data(format!(
            "designs cover {} periods but {} are required",
            designs.len(),
            t_train + horizon
        )));
    }
    let layout = ParamLayout::new(spec, designs);
    if layout.dim() != draws.dim() {
        return Err(Error::Data("draw width does not match the model layout".into()));
    }
    let data = crate::model::prepare(series, spec.ref_index)?;
    let j = spec.n_components;

    let results: Vec<Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> = (0..draws.n_draws())
        .into_par_iter()
        .map(|i| {
            let params = match draws.param_vector(&layout, i) {
                Ok(p) => p,
                Err(_) => return None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            // One retry per path on domain failure.
            for _ in 0..2 {
                if let Some(path) =
                    simulate_path(spec, &params, &data, designs, horizon, &mut rng)
                {
                    return Some(path);
                }
            }
            None
        })
        .collect();

    let mut paths = Vec::with_capacity(draws.n_draws());
    let mut mean_paths = Vec::with_capacity(draws.n_draws());
    let mut invalid = 0usize;
    for r in results {
        match r {
            Some((ys, mus)) => {
                paths.push(ys);
                mean_paths.push(mus);
            }
            None => invalid += 1,
        }
    }
    if paths.is_empty() {
        return Err(Error::Domain("every predictive path failed".into()));
    }

    let n = paths.len() as f64;
    let mut point = vec![vec![0.0; j]; horizon];
    let mut sampled_mean = vec![vec![0.0; j]; horizon];
    for (ys, mus) in paths.iter().zip(&mean_paths) {
        for s in 0..horizon {
            for c in 0..j {
                point[s][c] += mus[s][c] / n;
                sampled_mean[s][c] += ys[s][c] / n;
            }
        }
    }

    Ok(ForecastResult {
        horizon,
        n_components: j,
        paths,
        mean_paths,
        point,
        sampled_mean,
        invalid_paths: invalid,
    })
}

fn simulate_path(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &PreparedData,
    designs: &DesignMatrices,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let t_train = data.len();
    let j = spec.n_components;
    let fitted = latent_path(spec, params, data, designs).ok()?;
    let mut alr_hist: Vec<DVector<f64>> = data.alr.clone();
    let mut eta_hist = fitted.eta;
    let mut log_phi_hist = fitted.log_phi;

    let mut ys = Vec::with_capacity(horizon);
    let mut mus = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let t = t_train + s;
        let mut e = designs.mean_effect(t, &params.beta);
        for (p, a_mat) in params.ar.iter().enumerate() {
            let lag = t - (p + 1);
            e += a_mat * (&alr_hist[lag] - designs.mean_effect(lag, &params.beta));
        }
        for (q, b_mat) in params.ma.iter().enumerate() {
            let lag = t - (q + 1);
            e += b_mat * (&alr_hist[lag] - &eta_hist[lag]);
        }
        if e.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mu = mean_from_eta(&e, spec.ref_index, j);

        let y = if spec.has_precision_path() {
            let mut w = designs.prec_effect(t, &params.gamma);
            for (l, &alpha) in params.prec_ar.iter().enumerate() {
                let lag = t - (l + 1);
                let lag_effect = designs.prec_effect(lag, &params.gamma);
                w += alpha * (log_phi_hist[lag] - lag_effect);
            }
            for (k, &tau) in params.prec_ma.iter().enumerate() {
                let lag = t - (k + 1);
                w += tau * (&alr_hist[lag] - &eta_hist[lag]).norm_squared();
            }
            if !w.is_finite() {
                return None;
            }
            let w = w.clamp(-LOG_PHI_LIMIT, LOG_PHI_LIMIT);
            log_phi_hist.push(w);
            let mu_comp = crate::compositional::close(&mu).ok()?;
            let p = dirichlet::DirichletParams::new(mu_comp, w.exp()).ok()?;
            dirichlet::sample(&p, rng)
        } else {
            let sigma = params.sigma.expect("scale present");
            let lmat = params.corr_chol.as_ref().expect("correlation factor present");
            let z = DVector::from_fn(spec.n_coords(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let a_obs = &e + (lmat * z) * sigma;
            if a_obs.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let v = AlrVector::new(a_obs.iter().copied().collect(), spec.ref_index).ok()?;
            alr_inv(&v)
        };

        let a_new = alr(&y, spec.ref_index).ok()?;
        alr_hist.push(DVector::from_vec(a_new.values().to_vec()));
        eta_hist.push(e);
        ys.push(y.values().to_vec());
        mus.push(mu);
    }
    Some((ys, mus))
}

/// Equal-tailed empirical interval via the symmetric nearest-rank rule: with
/// `n` sorted draws and tail mass `(1 - level) / 2`, the bounds are the order
/// statistics at ranks `ceil(n a)` and `n + 1 - ceil(n a)`.
pub fn interval(result: &ForecastResult, level: f64) -> Result<IntervalSet> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("interval level must lie in (0, 1), got {level}")));
    }
    let n = result.paths.len();
    let alpha = (1.0 - level) / 2.0;
    // The small offset keeps float noise in `1 - level` from bumping the rank.
    let lo_rank = (((n as f64 * alpha) - 1e-9).ceil() as usize).max(1);
    let hi_rank = n + 1 - lo_rank;
    let mut lower = vec![vec![0.0; result.n_components]; result.horizon];
    let mut upper = vec![vec![0.0; result.n_components]; result.horizon];
    let mut buf = vec![0.0; n];
    for s in 0..result.horizon {
        for c in 0..result.n_components {
            for (i, path) in result.paths.iter().enumerate() {
                buf[i] = path[s][c];
            }
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
            lower[s][c] = buf[lo_rank - 1];
            upper[s][c] = buf[hi_rank - 1];
        }
    }
    Ok(IntervalSet { level, lower, upper, low_draw_warning: n < 100 })
}
