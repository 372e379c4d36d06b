use std::path::PathBuf;

use clap::Args;

use bdarch::inference::SamplerConfig;
use bdarch::simulation::{run_study, StudyConfig};

use crate::commands::{ensure_out_dir, resolve_seed};
use crate::errors::{CliError, CliResult};

#[derive(Args)]
pub struct SimulateArgs {
    /// Study number, 1 through 6.
    #[arg(long)]
    pub study: usize,
    /// Replicates to run (the published studies use 50).
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub t_len: usize,
    #[arg(long, default_value_t = 60)]
    pub train_len: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 500)]
    pub warmup: usize,
    #[arg(long, default_value_t = 500)]
    pub keep: usize,
    /// Output directory (falls back to BDARCH_OUT_DIR, then the cwd).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let out = ensure_out_dir(args.out.as_deref())?;
    let seed = resolve_seed(args.seed, None);
    let study = StudyConfig {
        study_id: args.study,
        n_replicates: args.replicates,
        t_len: args.t_len,
        train_len: args.train_len,
        n_components: 5,
        seed,
    };
    study.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let sampler = SamplerConfig {
        n_chains: args.chains,
        n_warmup: args.warmup,
        n_keep: args.keep,
        ..SamplerConfig::simulation(seed)
    };
    sampler.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let result = run_study(&study, &sampler)?;

    let metrics_path = out.join(format!("study{}_metrics.csv", args.study));
    let mut writer = csv::Writer::from_path(&metrics_path)?;
    writer.write_record([
        "study",
        "replicate",
        "model",
        "frmse_mean",
        "fmae_mean",
        "fmae_total",
        "frss_total",
        "coverage_mean",
        "max_rhat",
        "divergences",
    ])?;
    for rep in &result.replicates {
        for m in &rep.models {
            writer.write_record([
                args.study.to_string(),
                rep.replicate.to_string(),
                m.model.clone(),
                format!("{:.12}", m.metrics.frmse.mean),
                format!("{:.12}", m.metrics.fmae.mean),
                format!("{:.12}", m.metrics.fmae_total),
                format!("{:.12}", m.metrics.frss.total),
                m.metrics
                    .coverage
                    .as_ref()
                    .map(|c| format!("{:.6}", c.mean))
                    .unwrap_or_default(),
                format!("{:.6}", m.max_rhat),
                m.divergences.to_string(),
            ])?;
        }
    }
    writer.flush()?;

    let pacf_path = out.join(format!("study{}_mean_pacf.csv", args.study));
    let mut writer = csv::Writer::from_path(&pacf_path)?;
    writer.write_record(["model", "lag", "mean_pacf"])?;
    for (model, values) in &result.mean_pacf {
        for (lag, v) in values.iter().enumerate() {
            writer.write_record([model.clone(), (lag + 1).to_string(), format!("{v:.12}")])?;
        }
    }
    writer.flush()?;

    let manifest = serde_json::json!({
        "seed": seed,
        "study": study,
        "sampler": sampler,
        "failures": result.failures,
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        out.join(format!("study{}_manifest.json", args.study)),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    println!(
        "study {} complete: {} replicates, {} failures; reports in {}",
        args.study,
        result.replicates.len(),
        result.failures,
        out.display()
    );
    Ok(())
}
