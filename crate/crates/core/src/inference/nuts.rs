//! Gradient-based MCMC: Hamiltonian trajectories with no-U-turn termination,
//! multinomial state selection, dual-averaging step-size adaptation, and
//! windowed diagonal metric estimation during warm-up.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy error beyond which a trajectory is recorded as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A differentiable (unnormalized) log density.
pub trait LogDensityGradient: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density. May
    /// return negative infinity for rejected points, in which case the
    /// gradient content is ignored.
    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_keep: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub base_seed: u64,
    /// Initial positions are drawn uniformly from ±this range on the
    /// unconstrained scale.
    pub init_range: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 500,
            n_keep: 500,
            target_accept: 0.8,
            max_tree_depth: 10,
            base_seed: 0,
            init_range: 1.0,
        }
    }
}

impl SamplerConfig {
    /// Simulation-study defaults: four chains of 1000 iterations, half warm-up.
    pub fn simulation(base_seed: u64) -> Self {
        Self { base_seed, ..Self::default() }
    }

    /// Data-fit defaults: four chains of 2000 iterations, half warm-up.
    pub fn data_fit(base_seed: u64) -> Self {
        Self { n_warmup: 1000, n_keep: 1000, base_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if self.n_warmup < 1 || self.n_keep < 1 {
            return Err(Error::Config("warmup and kept draws must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target acceptance must lie in (0, 1)".into()));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 14 {
            return Err(Error::Config("tree depth must lie in 1..=14".into()));
        }
        if !(self.init_range > 0.0) {
            return Err(Error::Config("init range must be positive".into()));
        }
        Ok(())
    }
}

/// Per-chain summary statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainStats {
    pub accept_rate: f64,
    pub divergences: usize,
    pub max_depth_hits: usize,
    pub step_size: f64,
}

/// Raw sampler output on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct NutsRun {
    /// Kept positions indexed `[chain][draw][coordinate]`.
    pub positions: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<ChainStats>,
}

/// Runs all chains concurrently; chain RNG streams derive from the base seed
/// by stream index so results do not depend on scheduling order.
pub fn run_nuts<T: LogDensityGradient>(target: &T, cfg: &SamplerConfig) -> Result<NutsRun> {
    cfg.validate()?;
    let results: Vec<Result<(Vec<Vec<f64>>, ChainStats)>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain| run_chain(target, cfg, chain))
        .collect();
    let mut positions = Vec::with_capacity(cfg.n_chains);
    let mut stats = Vec::with_capacity(cfg.n_chains);
    for r in results {
        let (pos, st) = r?;
        positions.push(pos);
        stats.push(st);
    }
    Ok(NutsRun { positions, stats })
}

#[derive(Clone)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Metric {
    /// Diagonal of the inverse mass matrix (estimated posterior variances).
    inv_mass: Vec<f64>,
}

impl Metric {
    fn unit(dim: usize) -> Self {
        Self { inv_mass: vec![1.0; dim] }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(&pi, &im)| im * pi * pi).sum::<f64>()
    }

    fn sample_momentum(&self, rng: &mut ChaCha8Rng, p: &mut [f64]) {
        for (pi, &im) in p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *pi = z / im.sqrt();
        }
    }
}

fn hamiltonian(state: &State, metric: &Metric) -> f64 {
    if !state.logp.is_finite() {
        return f64::INFINITY;
    }
    -state.logp + metric.kinetic(&state.p)
}

fn leapfrog<T: LogDensityGradient>(
    target: &T,
    state: &State,
    eps: f64,
    metric: &Metric,
) -> State {
    let dim = state.q.len();
    let mut p: Vec<f64> = state
        .p
        .iter()
        .zip(&state.grad)
        .map(|(&pi, &gi)| pi + 0.5 * eps * gi)
        .collect();
    let mut q = state.q.clone();
    for i in 0..dim {
        q[i] += eps * metric.inv_mass[i] * p[i];
    }
    let mut grad = vec![0.0; dim];
    let logp = target.value_and_grad(&q, &mut grad);
    if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
        for i in 0..dim {
            p[i] += 0.5 * eps * grad[i];
        }
        State { q, p, grad, logp }
    } else {
        State { q, p, grad, logp: f64::NEG_INFINITY }
    }
}

/// U-turn criterion across a pair of endpoints, in the metric inner product.
fn turning(minus: &State, plus: &State, metric: &Metric) -> bool {
    let mut dot_minus = 0.0;
    let mut dot_plus = 0.0;
    for i in 0..minus.q.len() {
        let dq = plus.q[i] - minus.q[i];
        dot_minus += dq * metric.inv_mass[i] * minus.p[i];
        dot_plus += dq * metric.inv_mass[i] * plus.p[i];
    }
    dot_minus < 0.0 || dot_plus < 0.0
}

struct Subtree {
    minus: State,
    plus: State,
    proposal: State,
    log_sum_weight: f64,
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
    turning: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: LogDensityGradient>(
    target: &T,
    depth: usize,
    from: &State,
    direction: f64,
    eps: f64,
    h0: f64,
    metric: &Metric,
    rng: &mut ChaCha8Rng,
) -> Subtree {
    if depth == 0 {
        let state = leapfrog(target, from, direction * eps, metric);
        let h = hamiltonian(&state, metric);
        let divergent = !(h - h0).is_finite() || h - h0 > DIVERGENCE_THRESHOLD;
        let log_weight = if divergent { f64::NEG_INFINITY } else { h0 - h };
        let accept = if h.is_finite() { (h0 - h).min(0.0).exp() } else { 0.0 };
        return Subtree {
            minus: state.clone(),
            plus: state.clone(),
            proposal: state,
            log_sum_weight: log_weight,
            sum_accept: accept,
            n_leapfrog: 1,
            divergent,
            turning: false,
        };
    }

    let mut first = build_tree(target, depth - 1, from, direction, eps, h0, metric, rng);
    if first.divergent || first.turning {
        return first;
    }
    let inner_from = if direction > 0.0 { first.plus.clone() } else { first.minus.clone() };
    let second = build_tree(target, depth - 1, &inner_from, direction, eps, h0, metric, rng);

    let total = log_add_exp(first.log_sum_weight, second.log_sum_weight);
    // Uniform multinomial choice between the halves.
    if (rng.gen::<f64>().ln()) < second.log_sum_weight - total {
        first.proposal = second.proposal.clone();
    }
    if direction > 0.0 {
        first.plus = second.plus;
    } else {
        first.minus = second.minus;
    }
    first.log_sum_weight = total;
    first.sum_accept += second.sum_accept;
    first.n_leapfrog += second.n_leapfrog;
    first.divergent = second.divergent;
    first.turning = second.turning || turning(&first.minus, &first.plus, metric);
    first
}

/// Step-size search: doubles or halves until the single-step acceptance
/// probability crosses one half.
fn find_reasonable_epsilon<T: LogDensityGradient>(
    target: &T,
    state: &State,
    metric: &Metric,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut eps = 1.0;
    let mut probe = state.clone();
    metric.sample_momentum(rng, &mut probe.p);
    let h0 = hamiltonian(&probe, metric);
    let ratio = |eps: f64, probe: &State| -> f64 {
        let next = leapfrog(target, probe, eps, metric);
        let h = hamiltonian(&next, metric);
        (h0 - h).exp()
    };
    let dir: f64 = if ratio(eps, &probe) > 0.5 { 1.0 } else { -1.0 };
    for _ in 0..50 {
        let r = ratio(eps, &probe);
        if dir > 0.0 && r <= 0.5 {
            break;
        }
        if dir < 0.0 && r >= 0.5 {
            break;
        }
        eps *= 2.0_f64.powf(dir);
        if !(1e-10..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e7)
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    iter: usize,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            iter: 0,
            target,
        }
    }

    fn update(&mut self, accept_stat: f64) {
        self.iter += 1;
        let m = self.iter as f64;
        let eta = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let w = m.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Welford accumulator for the metric windows.
struct RunningVariance {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Regularized variance estimate, shrunk toward a small constant.
    fn regularized(&self) -> Option<Vec<f64>> {
        if self.count < 3 {
            return None;
        }
        let n = self.count as f64;
        Some(
            self.m2
                .iter()
                .map(|&m2| {
                    let var = m2 / (n - 1.0);
                    (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                })
                .collect(),
        )
    }
}

/// Warm-up phases: an initial step-size buffer, expanding variance windows,
/// and a terminal step-size buffer.
struct AdaptSchedule {
    window_ends: Vec<usize>,
    collect_from: usize,
    n_warmup: usize,
}

impl AdaptSchedule {
    fn new(n_warmup: usize) -> Self {
        if n_warmup < 20 {
            return Self { window_ends: Vec::new(), collect_from: n_warmup, n_warmup };
        }
        let (init, term, base) = if n_warmup >= 150 {
            (75, 50, 25)
        } else {
            let init = (0.15 * n_warmup as f64) as usize;
            let term = (0.1 * n_warmup as f64) as usize;
            (init.max(1), term.max(1), n_warmup - init.max(1) - term.max(1))
        };
        let last = n_warmup - term;
        let mut ends = Vec::new();
        let mut start = init;
        let mut size = base;
        loop {
            let mut end = start + size;
            // Absorb a remainder too small to form the next doubled window.
            if end + 2 * size > last {
                end = last;
            }
            ends.push(end.min(last));
            if ends[ends.len() - 1] >= last {
                break;
            }
            start = end;
            size *= 2;
        }
        Self { window_ends: ends, collect_from: init, n_warmup }
    }

    fn in_collection(&self, iter: usize) -> bool {
        !self.window_ends.is_empty()
            && iter >= self.collect_from
            && iter < *self.window_ends.last().unwrap()
    }

    fn is_window_end(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }

    fn is_warmup(&self, iter: usize) -> bool {
        iter < self.n_warmup
    }
}

fn run_chain<T: LogDensityGradient>(
    target: &T,
    cfg: &SamplerConfig,
    chain_idx: usize,
) -> Result<(Vec<Vec<f64>>, ChainStats)> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    rng.set_stream(chain_idx as u64 + 1);

    // Random restarts until the model is evaluable.
    let mut current = State {
        q: vec![0.0; dim],
        p: vec![0.0; dim],
        grad: vec![0.0; dim],
        logp: f64::NEG_INFINITY,
    };
    let mut found = false;
    for _ in 0..100 {
        for v in &mut current.q {
            *v = rng.gen_range(-cfg.init_range..cfg.init_range);
        }
        current.logp = target.value_and_grad(&current.q, &mut current.grad);
        if current.logp.is_finite() && current.grad.iter().all(|g| g.is_finite()) {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Init(format!(
            "chain {chain_idx}: no finite starting point in 100 attempts"
        )));
    }

    let mut metric = Metric::unit(dim);
    let eps0 = find_reasonable_epsilon(target, &current, &metric, &mut rng);
    let mut dual = DualAveraging::new(eps0, cfg.target_accept);
    let schedule = AdaptSchedule::new(cfg.n_warmup);
    let mut variance = RunningVariance::new(dim);

    let total = cfg.n_warmup + cfg.n_keep;
    let mut kept = Vec::with_capacity(cfg.n_keep);
    let mut divergences = 0usize;
    let mut depth_hits = 0usize;
    let mut accept_sum = 0.0;
    let mut accept_count = 0usize;
    let mut eps = dual.current();

    for iter in 0..total {
        let warmup = schedule.is_warmup(iter);
        metric.sample_momentum(&mut rng, &mut current.p);
        let h0 = hamiltonian(&current, &metric);
        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut chosen = current.clone();
        let mut log_sum_weight = 0.0;
        let mut sum_accept = 0.0;
        let mut n_leapfrog = 0usize;
        let mut diverged = false;

        for depth in 0..cfg.max_tree_depth {
            let direction: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let from = if direction > 0.0 { plus.clone() } else { minus.clone() };
            let subtree =
                build_tree(target, depth, &from, direction, eps, h0, &metric, &mut rng);
            sum_accept += subtree.sum_accept;
            n_leapfrog += subtree.n_leapfrog;
            if subtree.divergent {
                diverged = true;
                break;
            }
            if subtree.turning {
                break;
            }
            // Biased progressive selection toward the new half.
            if (rng.gen::<f64>().ln()) < subtree.log_sum_weight - log_sum_weight {
                chosen = subtree.proposal.clone();
            }
            log_sum_weight = log_add_exp(log_sum_weight, subtree.log_sum_weight);
            if direction > 0.0 {
                plus = subtree.plus;
            } else {
                minus = subtree.minus;
            }
            if turning(&minus, &plus, &metric) {
                break;
            }
            if depth + 1 == cfg.max_tree_depth {
                depth_hits += 1;
            }
        }

        if diverged {
            divergences += 1;
        }
        let accept_stat = if n_leapfrog > 0 { sum_accept / n_leapfrog as f64 } else { 0.0 };
        current = chosen;

        if warmup {
            dual.update(accept_stat);
            eps = dual.current();
            if schedule.in_collection(iter) {
                variance.push(&current.q);
            }
            if schedule.is_window_end(iter) {
                if let Some(var) = variance.regularized() {
                    metric.inv_mass = var;
                    variance = RunningVariance::new(dim);
                    let fresh = find_reasonable_epsilon(target, &current, &metric, &mut rng);
                    dual = DualAveraging::new(fresh, cfg.target_accept);
                    eps = dual.current();
                }
            }
            if iter + 1 == cfg.n_warmup {
                eps = dual.adapted();
            }
        } else {
            accept_sum += accept_stat;
            accept_count += 1;
            kept.push(current.q.clone());
        }
    }

    let stats = ChainStats {
        accept_rate: if accept_count > 0 { accept_sum / accept_count as f64 } else { 0.0 },
        divergences,
        max_depth_hits: depth_hits,
        step_size: eps,
    };
    Ok((kept, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use statrs::distribution::{ContinuousCDF, Normal};

    struct GaussianTarget {
        precision: DMatrix<f64>,
    }

    impl GaussianTarget {
        fn standard(dim: usize) -> Self {
            Self { precision: DMatrix::identity(dim, dim) }
        }

        fn from_covariance(cov: DMatrix<f64>) -> Self {
            Self { precision: cov.try_inverse().unwrap() }
        }
    }

    impl LogDensityGradient for GaussianTarget {
        fn dim(&self) -> usize {
            self.precision.nrows()
        }

        fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let xv = nalgebra::DVector::from_column_slice(x);
            let px = &self.precision * &xv;
            for i in 0..x.len() {
                grad[i] = -px[i];
            }
            -0.5 * xv.dot(&px)
        }
    }

    fn flat_draws(run: &NutsRun) -> Vec<&Vec<f64>> {
        run.positions.iter().flatten().collect()
    }

    #[test]
    fn standard_normal_recovery() {
        let target = GaussianTarget::standard(5);
        let cfg = SamplerConfig {
            n_chains: 4,
            n_warmup: 500,
            n_keep: 500,
            base_seed: 7,
            ..Default::default()
        };
        let run = run_nuts(&target, &cfg).unwrap();
        let draws = flat_draws(&run);
        let n = draws.len() as f64;
        assert_eq!(draws.len(), 2000);
        for i in 0..5 {
            let mean: f64 = draws.iter().map(|d| d[i]).sum::<f64>() / n;
            let var: f64 = draws.iter().map(|d| (d[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            // Autocorrelation-inflated standard error bound.
            assert!(mean.abs() < 3.0 * (1.0 / n).sqrt() * 3.0, "mean[{i}] = {mean}");
            assert!((var - 1.0).abs() < 0.1, "var[{i}] = {var}");
        }
        let divergence_rate: f64 = run.stats.iter().map(|s| s.divergences).sum::<usize>() as f64
            / (4.0 * 500.0);
        assert!(divergence_rate < 0.02);
    }

    #[test]
    fn correlated_gaussian_recovery() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.85, 0.85, 1.5]);
        let target = GaussianTarget::from_covariance(cov.clone());
        let cfg = SamplerConfig {
            n_chains: 4,
            n_warmup: 600,
            n_keep: 1000,
            base_seed: 11,
            ..Default::default()
        };
        let run = run_nuts(&target, &cfg).unwrap();
        let draws = flat_draws(&run);
        let n = draws.len() as f64;
        let mut mean = [0.0; 2];
        for d in &draws {
            mean[0] += d[0];
            mean[1] += d[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut est = [[0.0; 2]; 2];
        for d in &draws {
            for a in 0..2 {
                for b in 0..2 {
                    est[a][b] += (d[a] - mean[a]) * (d[b] - mean[b]);
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                est[a][b] /= n - 1.0;
                let truth = cov[(a, b)];
                assert!(
                    (est[a][b] - truth).abs() / truth.abs() < 0.1,
                    "cov[{a}][{b}] = {} vs {truth}",
                    est[a][b]
                );
            }
        }
    }

    #[test]
    fn one_dimensional_ks_against_normal() {
        let target = GaussianTarget::standard(1);
        let cfg = SamplerConfig {
            n_chains: 2,
            n_warmup: 500,
            n_keep: 2000,
            base_seed: 3,
            ..Default::default()
        };
        let run = run_nuts(&target, &cfg).unwrap();
        let mut xs: Vec<f64> = run.positions.iter().flatten().map(|d| d[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = normal.cdf(x);
                let hi = (i + 1) as f64 / n;
                let lo = i as f64 / n;
                (hi - cdf).abs().max((cdf - lo).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.03, "KS distance {ks}");
    }

    #[test]
    fn identical_seeds_reproduce_draws() {
        let target = GaussianTarget::standard(3);
        let cfg = SamplerConfig {
            n_chains: 2,
            n_warmup: 100,
            n_keep: 100,
            base_seed: 42,
            ..Default::default()
        };
        let a = run_nuts(&target, &cfg).unwrap();
        let b = run_nuts(&target, &cfg).unwrap();
        assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn adapt_schedule_covers_warmup() {
        let s = AdaptSchedule::new(500);
        assert_eq!(s.collect_from, 75);
        assert_eq!(*s.window_ends.last().unwrap(), 450);
        let s = AdaptSchedule::new(1000);
        assert_eq!(*s.window_ends.last().unwrap(), 950);
        // Windows strictly increase.
        for w in s.window_ends.windows(2) {
            assert!(w[0] < w[1]);
        }
        let s = AdaptSchedule::new(10);
        assert!(s.window_ends.is_empty());
    }

    #[test]
    fn rejecting_target_fails_initialization() {
        struct Hopeless;
        impl LogDensityGradient for Hopeless {
            fn dim(&self) -> usize {
                2
            }
            fn value_and_grad(&self, _x: &[f64], _grad: &mut [f64]) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let cfg = SamplerConfig { n_chains: 1, ..Default::default() };
        assert!(run_nuts(&Hopeless, &cfg).is_err());
    }
}
