use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use bdarch::covariates::build_designs;
use bdarch::inference::sample_posterior;
use bdarch::model::{ModelSpec, ModelVariant};

use crate::commands::{ensure_out_dir, resolve_seed};
use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};
use crate::io;

#[derive(Args)]
pub struct FitArgs {
    /// Share table: first column time, remaining columns components.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub ar_order: Option<usize>,
    #[arg(long)]
    pub ma_order: Option<usize>,
    #[arg(long)]
    pub prec_ar_order: Option<usize>,
    #[arg(long)]
    pub prec_ma_order: Option<usize>,
    /// Reference component column name.
    #[arg(long)]
    pub ref_component: Option<String>,
    #[arg(long)]
    pub priors: Option<String>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit on the first N rows only.
    #[arg(long)]
    pub train_len: Option<usize>,
    /// Accept long-format (time, component, value) input.
    #[arg(long)]
    pub long: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_variant(s: &str) -> CliResult<ModelVariant> {
    match s {
        "b-darma" | "bdarma" | "darma" => Ok(ModelVariant::BDarma),
        "b-darma-darch" | "b-darch" | "bdarch" | "darch" => Ok(ModelVariant::BDarmaDarch),
        "b-tvarma" | "btvarma" | "tvarma" => Ok(ModelVariant::BTVarma),
        other => Err(CliError::usage(format!(
            "unknown variant '{other}' (expected b-darma, b-darma-darch, or b-tvarma)"
        ))),
    }
}

/// Everything a later forecast needs to rebuild the model.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub component_names: Vec<String>,
    pub train_len: usize,
    pub seed: u64,
    pub rhat: Vec<(String, f64)>,
    pub ess: Vec<(String, f64)>,
    pub divergences: usize,
    pub max_depth_hits: usize,
    pub accept_rates: Vec<f64>,
    pub non_convergent: bool,
    pub version: String,
}

pub fn apply_overrides(cfg: &mut RunConfig, args: &FitArgs) -> CliResult<()> {
    if let Some(v) = &args.variant {
        cfg.variant = parse_variant(v)?;
        if cfg.variant != ModelVariant::BDarmaDarch {
            cfg.prec_ar_order = 0;
            cfg.prec_ma_order = 0;
        }
    }
    if let Some(v) = args.ar_order {
        cfg.ar_order = v;
    }
    if let Some(v) = args.ma_order {
        cfg.ma_order = v;
    }
    if let Some(v) = args.prec_ar_order {
        cfg.prec_ar_order = v;
    }
    if let Some(v) = args.prec_ma_order {
        cfg.prec_ma_order = v;
    }
    if let Some(v) = &args.ref_component {
        cfg.ref_component = Some(v.clone());
    }
    if let Some(v) = &args.priors {
        cfg.priors = crate::config::PriorChoice::Preset(v.clone());
        cfg.priors.resolve()?;
    }
    if let Some(v) = args.chains {
        cfg.sampler.n_chains = v;
    }
    if let Some(v) = args.warmup {
        cfg.sampler.n_warmup = v;
    }
    if let Some(v) = args.keep {
        cfg.sampler.n_keep = v;
    }
    if let Some(v) = args.train_len {
        cfg.train_len = Some(v);
    }
    if args.long {
        cfg.long_format = true;
    }
    Ok(())
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let out = ensure_out_dir(args.out.as_deref())?;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &args)?;
    let seed = resolve_seed(args.seed, cfg.seed);
    cfg.seed = Some(seed);
    cfg.sampler.base_seed = seed;

    let loaded = if cfg.long_format {
        io::read_long_csv(&args.data)?
    } else {
        io::read_wide_csv(&args.data)?
    };
    let train_len = cfg.train_len.unwrap_or(loaded.series.len());
    if train_len < 2 || train_len > loaded.series.len() {
        return Err(CliError::usage(format!(
            "training length {train_len} out of range for {} rows",
            loaded.series.len()
        )));
    }
    let train = loaded.series.head(train_len);
    let spec = cfg.model_spec(&loaded.component_names)?;
    let priors = cfg.priors.resolve()?;
    let designs = build_designs(
        &spec.mean_covariates,
        &spec.prec_covariates,
        train_len,
        spec.n_components,
        0,
        train_len as f64,
    )?;

    let (draws, diag) = sample_posterior(&spec, &priors, &train, &designs, &cfg.sampler)?;

    io::write_draws_csv(&out.join("draws.csv"), &draws)?;
    let non_convergent = diag.rhat.iter().any(|&r| r > 1.1);
    let summary = FitSummary {
        config: cfg,
        spec,
        component_names: loaded.component_names,
        train_len,
        seed,
        rhat: draws.names.iter().cloned().zip(diag.rhat.iter().copied()).collect(),
        ess: draws.names.iter().cloned().zip(diag.ess.iter().copied()).collect(),
        divergences: diag.divergences,
        max_depth_hits: diag.max_depth_hits,
        accept_rates: draws.chain_stats.iter().map(|s| s.accept_rate).collect(),
        non_convergent,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(out.join("fit_summary.json"), serde_json::to_string_pretty(&summary)?)?;

    let max_rhat = diag.max_rhat();
    println!(
        "fit complete: {} draws, max split R-hat {:.4}, min bulk ESS {:.0}, {} divergences",
        draws.n_draws(),
        max_rhat,
        diag.min_ess(),
        diag.divergences
    );
    println!("artifacts in {}", out.display());
    if non_convergent {
        return Err(CliError::non_convergent(format!(
            "split R-hat reached {max_rhat:.4} (> 1.1); report written to {}",
            out.display()
        )));
    }
    Ok(())
}
