//! Dirichlet density, moments, residual standardization, and sampling.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::compositional::{close, Composition, SIMPLEX_EPS};
use crate::error::{Error, Result};

/// Mean/precision parameterization: the concentration vector is `phi * mu`.
#[derive(Debug, Clone)]
pub struct DirichletParams {
    mu: Composition,
    phi: f64,
}

impl DirichletParams {
    pub fn new(mu: Composition, phi: f64) -> Result<Self> {
        if !phi.is_finite() || phi <= 0.0 {
            return Err(Error::Domain(format!("precision must be positive, got {phi}")));
        }
        Ok(Self { mu, phi })
    }

    pub fn mu(&self) -> &Composition {
        &self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_components(&self) -> usize {
        self.mu.n_components()
    }
}

/// Log density at `y`.
///
/// Shares are clamped to `SIMPLEX_EPS` before the log, consistent with the
/// clamping applied by the inverse ALR transform.
pub fn log_pdf(y: &Composition, p: &DirichletParams) -> f64 {
    assert_eq!(y.n_components(), p.n_components(), "component count mismatch");
    let phi = p.phi;
    let mut out = ln_gamma(phi);
    for (&yj, &mj) in y.values().iter().zip(p.mu.values()) {
        let a = phi * mj;
        out -= ln_gamma(a);
        out += (a - 1.0) * yj.max(SIMPLEX_EPS).ln();
    }
    out
}

/// Marginal variance of component `j`: `mu_j (1 - mu_j) / (phi + 1)`.
pub fn component_var(p: &DirichletParams, j: usize) -> f64 {
    let mj = p.mu.values()[j];
    mj * (1.0 - mj) / (p.phi + 1.0)
}

/// One draw, via normalized Gamma variates.
///
/// The underlying Gamma sampler remains valid for shapes below one; the
/// resulting shares are clamped onto the open simplex consistently with
/// `alr_inv`.
pub fn sample<R: Rng + ?Sized>(p: &DirichletParams, rng: &mut R) -> Composition {
    let raw: Vec<f64> = p
        .mu
        .values()
        .iter()
        .map(|&mj| {
            let g = Gamma::new(p.phi * mj, 1.0).expect("positive shape");
            g.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect();
    let c = close(&raw).expect("positive gamma draws");
    // Clamp away from the boundary so downstream log-ratio transforms stay finite.
    let clamped: Vec<f64> = c.values().iter().map(|&v| v.max(SIMPLEX_EPS)).collect();
    close(&clamped).expect("clamped shares")
}

/// Per-component residuals `(y_j - mu_j) / sd_j` with `sd_j` from
/// [`component_var`].
pub fn standardized_residual(y: &Composition, p: &DirichletParams) -> Vec<f64> {
    assert_eq!(y.n_components(), p.n_components(), "component count mismatch");
    y.values()
        .iter()
        .zip(p.mu.values())
        .enumerate()
        .map(|(j, (&yj, &mj))| (yj - mj) / component_var(p, j).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Beta, ContinuousCDF};

    /// Independent log-gamma path (Lanczos, g = 7) used only as a test oracle.
    pub(crate) fn ln_gamma_oracle(x: f64) -> f64 {
        const COEF: [f64; 9] = [
            0.99999999999980993,
            676.5203681218851,
            -1259.1392167224028,
            771.32342877765313,
            -176.61502916214059,
            12.507343278686905,
            -0.13857109526572012,
            9.9843695780195716e-6,
            1.5056327351493116e-7,
        ];
        assert!(x > 0.0);
        if x < 0.5 {
            // Reflection keeps small arguments accurate.
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma_oracle(1.0 - x);
        }
        let z = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
    }

    fn log_pdf_oracle(y: &[f64], mu: &[f64], phi: f64) -> f64 {
        let mut out = ln_gamma_oracle(phi);
        for (&yj, &mj) in y.iter().zip(mu) {
            out -= ln_gamma_oracle(phi * mj);
            out += (phi * mj - 1.0) * yj.ln();
        }
        out
    }

    #[test]
    fn log_pdf_flat_cases() {
        // All concentrations one: density is Gamma(J) everywhere.
        let p = DirichletParams::new(Composition::equal(3), 3.0).unwrap();
        let y = Composition::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_relative_eq!(log_pdf(&y, &p), 2.0_f64.ln(), epsilon = 1e-13);

        let p = DirichletParams::new(Composition::equal(2), 2.0).unwrap();
        let y = Composition::new(vec![0.3, 0.7]).unwrap();
        assert_relative_eq!(log_pdf(&y, &p), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn log_pdf_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let j = rng.gen_range(2..6);
            let mu = close(&(0..j).map(|_| rng.gen_range(0.1..2.0)).collect::<Vec<_>>()).unwrap();
            let y = close(&(0..j).map(|_| rng.gen_range(0.1..2.0)).collect::<Vec<_>>()).unwrap();
            let phi = rng.gen_range(0.2..300.0);
            let p = DirichletParams::new(mu.clone(), phi).unwrap();
            let ours = log_pdf(&y, &p);
            let oracle = log_pdf_oracle(y.values(), mu.values(), phi);
            assert_relative_eq!(ours, oracle, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn component_var_hand_cases() {
        let mu = close(&[0.2, 0.8]).unwrap();
        let p = DirichletParams::new(mu, 9.0).unwrap();
        assert_relative_eq!(component_var(&p, 0), 0.016, epsilon = 1e-15);
        // phi -> 0 limit of the formula.
        let p = DirichletParams::new(Composition::equal(2), 1e-12).unwrap();
        assert_relative_eq!(component_var(&p, 0), 0.25, epsilon = 1e-9);
    }

    #[test]
    fn sampling_moments_match() {
        let mu = close(&[0.5, 0.3, 0.2]).unwrap();
        let p = DirichletParams::new(mu.clone(), 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut mean = vec![0.0; 3];
        let mut sq = vec![0.0; 3];
        for _ in 0..n {
            let d = sample(&p, &mut rng);
            for (j, &v) in d.values().iter().enumerate() {
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        for j in 0..3 {
            mean[j] /= n as f64;
            let var = sq[j] / n as f64 - mean[j] * mean[j];
            let true_var = component_var(&p, j);
            let se = (true_var / n as f64).sqrt();
            assert!(
                (mean[j] - mu.values()[j]).abs() < 3.0 * se,
                "component {j}: mean {} vs {}",
                mean[j],
                mu.values()[j]
            );
            // Variance of a squared quantity: allow a loose band.
            assert!((var - true_var).abs() / true_var < 0.05);
        }
    }

    #[test]
    fn two_components_reduce_to_beta() {
        let mu = close(&[0.3, 0.7]).unwrap();
        let phi = 5.0;
        let p = DirichletParams::new(mu, phi).unwrap();
        let beta = Beta::new(phi * 0.3, phi * 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| sample(&p, &mut rng).values()[0]).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let emp_hi = (i + 1) as f64 / n as f64;
                let emp_lo = i as f64 / n as f64;
                let cdf = beta.cdf(x);
                (emp_hi - cdf).abs().max((cdf - emp_lo).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn standardized_residual_cases() {
        let mu = close(&[0.25, 0.25, 0.5]).unwrap();
        let p = DirichletParams::new(mu.clone(), 10.0).unwrap();
        let r = standardized_residual(&mu, &p);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        // A deviation of exactly one sd in component 0.
        let sd0 = component_var(&p, 0).sqrt();
        let y = Composition::new(vec![0.25 + sd0, 0.25 - sd0 / 2.0, 0.5 - sd0 / 2.0]).unwrap();
        let r = standardized_residual(&y, &p);
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn density_integrates_to_one_on_segment() {
        // J = 2: fine trapezoid quadrature of exp(log_pdf) over (0, 1).
        // Concentrations above one keep the density bounded at the endpoints.
        for (m0, phi) in [(0.5, 4.0), (0.3, 10.0), (0.7, 5.0)] {
            let p = DirichletParams::new(close(&[m0, 1.0 - m0]).unwrap(), phi).unwrap();
            let n = 2_000_000usize;
            let h = 1.0 / n as f64;
            let f = |x: f64| {
                let y = Composition::new(vec![x, 1.0 - x]).unwrap();
                log_pdf(&y, &p).exp()
            };
            let mut total = 0.0;
            for i in 1..n {
                total += f(i as f64 * h);
            }
            total += 0.5 * (f(h * 0.5) + f(1.0 - h * 0.5));
            total *= h;
            assert!((total - 1.0).abs() < 1e-6, "integral {total} for phi={phi}");
        }
    }

    #[test]
    fn mode_approaches_mean_for_large_phi() {
        let mu = close(&[0.3, 0.45, 0.25]).unwrap();
        let p = DirichletParams::new(mu.clone(), 1e4).unwrap();
        let grid = 200;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 1..grid {
            for k in 1..grid - i {
                let a = i as f64 / grid as f64;
                let b = k as f64 / grid as f64;
                let y = Composition::new(vec![a, b, 1.0 - a - b]).unwrap();
                let lp = log_pdf(&y, &p);
                if lp > best.0 {
                    best = (lp, a, b);
                }
            }
        }
        let res = 1.0 / grid as f64;
        assert!((best.1 - 0.3).abs() <= res + 1e-12);
        assert!((best.2 - 0.45).abs() <= res + 1e-12);
    }
}

