//! Convergence diagnostics: split potential scale reduction and bulk
//! effective sample size.

/// Split R-hat for one parameter. Each chain is halved, halves are treated as
/// chains, and the usual between/within variance ratio is formed. A constant
/// parameter is flagged and reported as exactly 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> (f64, bool) {
    let split = split_in_half(chains);
    let m = split.len() as f64;
    let n = split[0].len() as f64;
    let chain_means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let grand = chain_means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0)
        * chain_means.iter().map(|&cm| (cm - grand).powi(2)).sum::<f64>();
    let w = split
        .iter()
        .map(|c| {
            let cm = mean(c);
            c.iter().map(|&x| (x - cm).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum::<f64>()
        / m;
    if w < 1e-300 {
        return (1.0, true);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    ((var_plus / w).sqrt(), false)
}

/// Bulk effective sample size: combined-chain autocorrelation sum with the
/// pairwise (initial positive sequence) truncation. Constant sequences report
/// zero.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let split = split_in_half(chains);
    let m = split.len();
    let n = split[0].len();
    if n < 4 {
        return 0.0;
    }
    let m_f = m as f64;
    let n_f = n as f64;
    let chain_means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = split
        .iter()
        .zip(&chain_means)
        .map(|(c, &cm)| c.iter().map(|&x| (x - cm).powi(2)).sum::<f64>() / (n_f - 1.0))
        .collect();
    let w: f64 = chain_vars.iter().sum::<f64>() / m_f;
    if w < 1e-300 {
        return 0.0;
    }
    let grand = chain_means.iter().sum::<f64>() / m_f;
    let b_over_n = if m > 1 {
        chain_means.iter().map(|&cm| (cm - grand).powi(2)).sum::<f64>() / (m_f - 1.0)
    } else {
        0.0
    };
    let var_plus = (n_f - 1.0) / n_f * w + b_over_n;

    // Chain-averaged autocovariances (biased 1/n normalization).
    let max_lag = n - 1;
    let mut rho = Vec::with_capacity(max_lag);
    for lag in 1..max_lag {
        let mut acov = 0.0;
        for (c, &cm) in split.iter().zip(&chain_means) {
            let mut s = 0.0;
            for t in 0..n - lag {
                s += (c[t] - cm) * (c[t + lag] - cm);
            }
            acov += s / n_f;
        }
        acov /= m_f;
        rho.push(1.0 - (w - acov) / var_plus);
    }

    // Geyer pairwise truncation with enforced monotone decrease.
    let mut tau = 1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while k + 1 < rho.len() {
        let pair = rho[k] + rho[k + 1];
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        k += 2;
    }
    let total = m_f * n_f;
    (total / tau).min(total * (1.0 + 1e-12))
}

fn split_in_half(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let mid = c.len() / 2;
        out.push(&c[..mid]);
        out.push(&c[mid..mid * 2]);
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-parameter convergence summary for one sampling run.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Parameters whose within-chain variance vanished.
    pub constant_flags: Vec<bool>,
    pub divergences: usize,
    pub max_depth_hits: usize,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().cloned().fold(1.0, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn iid_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn rhat_near_one_for_iid_chains() {
        let chains = iid_chains(1, 4, 1000);
        let (r, flagged) = split_rhat(&chains);
        assert!(!flagged);
        assert!((r - 1.0).abs() < 0.02, "rhat {r}");
    }

    #[test]
    fn rhat_large_for_separated_chains() {
        let mut chains = iid_chains(2, 2, 500);
        for v in &mut chains[1] {
            *v += 10.0;
        }
        let (r, _) = split_rhat(&chains);
        assert!(r > 2.0, "rhat {r}");
    }

    #[test]
    fn rhat_constant_flagged() {
        let chains = vec![vec![1.5; 100], vec![1.5; 100]];
        let (r, flagged) = split_rhat(&chains);
        assert_eq!(r, 1.0);
        assert!(flagged);
        assert_eq!(ess_bulk(&chains), 0.0);
    }

    #[test]
    fn ess_iid_in_expected_band() {
        let chains = iid_chains(3, 4, 1000);
        let ess = ess_bulk(&chains);
        assert!((3200.0..=4800.0).contains(&ess), "ess {ess}");
    }

    #[test]
    fn ess_ar1_matches_analytic_rate() {
        // AR(1) with coefficient 0.9: ESS ~ n (1 - rho) / (1 + rho).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho: f64 = 0.9;
        let scale = (1.0 - rho * rho).sqrt();
        let n = 20_000;
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut x = 0.0;
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        x = rho * x + scale * z;
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = ess_bulk(&chains);
        let expected = (2 * n) as f64 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (ess - expected).abs() / expected < 0.3,
            "ess {ess} vs expected {expected}"
        );
    }
}
