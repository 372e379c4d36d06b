use std::path::PathBuf;

use clap::Args;

use bdarch::covariates::build_designs;
use bdarch::forecast::{interval, predict};

use crate::commands::{ensure_out_dir, resolve_seed};
use crate::commands::fit::FitSummary;
use crate::errors::{CliError, CliResult};
use crate::io;

#[derive(Args)]
pub struct ForecastArgs {
    /// Directory holding draws.csv and fit_summary.json from `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// The training share table (re-validated on load).
    #[arg(long)]
    pub data: PathBuf,
    /// Steps ahead to simulate.
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ForecastArgs) -> CliResult<()> {
    if args.horizon == 0 {
        return Err(CliError::usage("forecast horizon must be positive".to_string()));
    }
    let out = ensure_out_dir(args.out.as_deref())?;
    let summary_path = args.fit.join("fit_summary.json");
    let summary: FitSummary = serde_json::from_str(
        &std::fs::read_to_string(&summary_path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", summary_path.display())))?,
    )?;
    let loaded = if summary.config.long_format {
        io::read_long_csv(&args.data)?
    } else {
        io::read_wide_csv(&args.data)?
    };
    if loaded.component_names != summary.component_names {
        return Err(CliError::usage(
            "data columns do not match the fitted model's components".to_string(),
        ));
    }
    let train = loaded.series.head(summary.train_len.min(loaded.series.len()));
    let designs = build_designs(
        &summary.spec.mean_covariates,
        &summary.spec.prec_covariates,
        train.len() + args.horizon,
        summary.spec.n_components,
        0,
        summary.train_len as f64,
    )?;
    let draws = io::read_draws_csv(
        &args.fit.join("draws.csv"),
        &bdarch::model::ParamLayout::new(&summary.spec, &designs).names(),
    )?;
    let seed = resolve_seed(args.seed, Some(summary.seed ^ 0xF0CA));

    let result = predict(&summary.spec, &draws, &train, &designs, args.horizon, seed)?;
    let wide = interval(&result, 0.95)?;
    let narrow = interval(&result, 0.5)?;
    let labels = io::continue_labels(
        train.time_index().last().expect("nonempty series"),
        args.horizon,
    );
    io::write_forecast_csv(
        &out.join("forecast.csv"),
        &labels,
        &summary.component_names,
        &result,
        &wide,
        &narrow,
    )?;
    let manifest = serde_json::json!({
        "seed": seed,
        "horizon": args.horizon,
        "n_draws": result.paths.len(),
        "invalid_paths": result.invalid_paths,
        "low_draw_warning": wide.low_draw_warning,
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(out.join("forecast_manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!(
        "forecast complete: {} steps x {} components from {} paths ({} invalid); output in {}",
        args.horizon,
        summary.component_names.len(),
        result.paths.len(),
        result.invalid_paths,
        out.display()
    );
    Ok(())
}
