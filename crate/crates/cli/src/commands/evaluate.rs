use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;

use bdarch::metrics::evaluate_forecast;

use crate::commands::ensure_out_dir;
use crate::errors::{CliError, CliResult};
use crate::io;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Forecast CSV written by the forecast command.
    #[arg(long)]
    pub forecast: PathBuf,
    /// Realized shares in wide format, keyed by the same time labels.
    #[arg(long)]
    pub actuals: PathBuf,
    /// Display multiplier for the rendered table (stored CSV stays raw).
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> CliResult<()> {
    let out = ensure_out_dir(args.out.as_deref())?;
    let forecast_rows = io::read_forecast_csv(&args.forecast)?;
    let actuals = io::read_wide_csv(&args.actuals)?;

    let mut actual_by_time: HashMap<&str, usize> = HashMap::new();
    for (t, label) in actuals.series.time_index().iter().enumerate() {
        actual_by_time.insert(label.as_str(), t);
    }
    let comp_index: HashMap<&str, usize> = actuals
        .component_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    // Group forecast rows by time label, preserving order of appearance.
    let mut times: Vec<&str> = Vec::new();
    for row in &forecast_rows {
        if !times.contains(&row.time.as_str()) {
            times.push(&row.time);
        }
    }
    let j = actuals.component_names.len();
    let mut point = vec![vec![f64::NAN; j]; times.len()];
    let mut lower = vec![vec![f64::NAN; j]; times.len()];
    let mut upper = vec![vec![f64::NAN; j]; times.len()];
    let mut actual = vec![vec![f64::NAN; j]; times.len()];
    let has_intervals = forecast_rows.iter().all(|r| r.lower_95.is_some() && r.upper_95.is_some());

    for row in &forecast_rows {
        let ti = times.iter().position(|t| *t == row.time).unwrap();
        let ci = *comp_index.get(row.component.as_str()).ok_or_else(|| {
            CliError::usage(format!(
                "forecast component '{}' not present in actuals (first mismatch)",
                row.component
            ))
        })?;
        let at = *actual_by_time.get(row.time.as_str()).ok_or_else(|| {
            CliError::usage(format!(
                "forecast time '{}' not present in actuals (first mismatch)",
                row.time
            ))
        })?;
        point[ti][ci] = row.point;
        actual[ti][ci] = actuals.series.row(at).values()[ci];
        if let (Some(lo), Some(hi)) = (row.lower_95, row.upper_95) {
            lower[ti][ci] = lo;
            upper[ti][ci] = hi;
        }
    }
    if point.iter().flatten().any(|v| v.is_nan()) {
        return Err(CliError::usage(
            "forecast file does not cover every (time, component) pair".to_string(),
        ));
    }

    let bounds = has_intervals.then_some((lower.as_slice(), upper.as_slice()));
    let report = evaluate_forecast(&actual, &point, bounds, args.scale)?;
    io::write_metrics_csv(&out.join("metrics.csv"), &actuals.component_names, &report)?;
    print!("{}", io::render_metrics_table(&actuals.component_names, &report));
    println!("metrics written to {}", out.join("metrics.csv").display());
    Ok(())
}
