// Temporary diagnostic harness (not part of the deliverable).

use bdarch::covariates::build_designs;
use bdarch::inference::{sample_posterior, SamplerConfig};
use bdarch::model::{ModelVariant, ParamLayout, Priors};
use bdarch::simulation::{
    comparison_specs, draw_dgp_params, generate_series, run_study, DgpKind, StudyConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn recovery_probe(t_len: usize, seed: u64) {
    let spec = comparison_specs(5).remove(1);
    let designs = build_designs(
        &spec.mean_covariates,
        &spec.prec_covariates,
        t_len,
        5,
        0,
        t_len as f64,
    )
    .unwrap();
    let layout = ParamLayout::new(&spec, &designs);
    let study = StudyConfig::new(2, 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dgp = draw_dgp_params(DgpKind::Darch, &study, &mut rng).unwrap();
    dgp.log_phi0 = Some(7.0);
    let series = generate_series(DgpKind::Darch, &dgp, t_len, &mut rng).unwrap();
    let cfg = SamplerConfig { n_warmup: 500, n_keep: 1000, base_seed: seed + 5000, ..Default::default() };
    let (draws, diag) =
        sample_posterior(&spec, &Priors::simulation(), &series, &designs, &cfg).unwrap();
    let idx_alpha = layout.prec_ar_at();
    let idx_tau = layout.prec_ma_at();
    let idx_gamma = layout.gamma_at();
    let mean_sd = |idx: usize| {
        let xs = draws.column(idx);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, sd)
    };
    let (ma, sa) = mean_sd(idx_alpha);
    let (mt, st) = mean_sd(idx_tau);
    let (mg, sg) = mean_sd(idx_gamma);
    println!(
        "T={t_len} seed={seed}: alpha {ma:.3}±{sa:.3} (true 0.8), tau {mt:.3}±{st:.3} (true -0.95), gamma {mg:.3}±{sg:.3} (true 7.0)"
    );
    println!(
        "         rhat[a]={:.3} rhat[t]={:.3} rhat[g]={:.3} max_rhat={:.3} min_ess={:.0} divergences={} depth_hits={} accept={:?} step={:?}",
        diag.rhat[idx_alpha],
        diag.rhat[idx_tau],
        diag.rhat[idx_gamma],
        diag.max_rhat(),
        diag.min_ess(),
        diag.divergences,
        diag.max_depth_hits,
        draws.chain_stats.iter().map(|s| (s.accept_rate * 100.0).round() / 100.0).collect::<Vec<_>>(),
        draws.chain_stats.iter().map(|s| (s.step_size * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
    );
}

fn study_probe(study_id: usize, n_reps: usize, seed: u64) {
    let cfg = StudyConfig::new(study_id, n_reps, seed);
    let sampler = SamplerConfig::simulation(seed);
    let result = run_study(&cfg, &sampler).unwrap();
    println!("study {study_id}: {} replicates ok, {} failed", result.replicates.len(), result.failures);
    for rep in &result.replicates {
        let line: Vec<String> = rep
            .models
            .iter()
            .map(|m| {
                format!(
                    "{}: frmse {:.4} rhat {:.2} div {}",
                    m.model, m.metrics.frmse.mean, m.max_rhat, m.divergences
                )
            })
            .collect();
        println!("  rep {}: {}", rep.replicate, line.join(" | "));
    }
    let n_models = result.replicates[0].models.len();
    for mi in 0..n_models {
        let mean: f64 = result.replicates.iter().map(|r| r.models[mi].metrics.frmse.mean).sum::<f64>()
            / result.replicates.len() as f64;
        println!(
            "  mean frmse {}: {:.4}",
            result.replicates[0].models[mi].model,
            mean
        );
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "recovery".into());
    match mode.as_str() {
        "recovery" => {
            recovery_probe(300, 301);
            recovery_probe(300, 302);
            recovery_probe(1500, 301);
        }
        "study2" => study_probe(2, 3, 42),
        "study5" => study_probe(5, 3, 43),
        other => eprintln!("unknown probe {other}"),
    }
}
