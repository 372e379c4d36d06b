//! CSV input and output: wide/long share tables, draw files, forecasts, and
//! metric tables.

use std::collections::BTreeMap;
use std::path::Path;

use bdarch::compositional::{Composition, CompositionalSeries};
use bdarch::forecast::{ForecastResult, IntervalSet};
use bdarch::inference::{ChainStats, PosteriorDraws};
use bdarch::metrics::MetricsReport;

use crate::errors::{CliError, CliResult};

/// Rows whose shares miss 1 by more than this are rejected; closer rows are
/// renormalized silently.
const ROW_SUM_TOLERANCE: f64 = 1e-6;

pub struct LoadedSeries {
    pub series: CompositionalSeries,
    pub component_names: Vec<String>,
}

/// Reads a wide share table: first column is the time label, remaining
/// columns are component shares.
pub fn read_wide_csv(path: &Path) -> CliResult<LoadedSeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 {
        return Err(CliError::usage(
            "wide data needs a time column plus at least 2 component columns".to_string(),
        ));
    }
    let component_names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header occupies line 1
        let record = record?;
        if record.len() != headers.len() {
            return Err(CliError::usage(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        labels.push(record[0].to_string());
        let mut shares = Vec::with_capacity(component_names.len());
        for (c, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::usage(format!(
                    "line {line}: component '{}' value '{field}' is not a number",
                    component_names[c]
                ))
            })?;
            if !v.is_finite() || v <= 0.0 {
                return Err(CliError::usage(format!(
                    "line {line}: component '{}' share {v} must be strictly positive",
                    component_names[c]
                )));
            }
            shares.push(v);
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(CliError::usage(format!(
                "line {line}: shares sum to {sum}, outside 1 ± {ROW_SUM_TOLERANCE}"
            )));
        }
        for v in &mut shares {
            *v /= sum;
        }
        rows.push(Composition::new(shares).map_err(|e| CliError::usage(format!("line {line}: {e}")))?);
    }
    if rows.is_empty() {
        return Err(CliError::usage("data file has no rows".to_string()));
    }
    let series = CompositionalSeries::new(rows, labels)?;
    Ok(LoadedSeries { series, component_names })
}

/// Reads a long table with columns (time, component, value) and pivots it.
/// Component order follows first appearance.
pub fn read_long_csv(path: &Path) -> CliResult<LoadedSeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let mut component_names: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() < 3 {
            return Err(CliError::usage(format!("line {line}: expected time,component,value")));
        }
        let time = record[0].to_string();
        let comp = record[1].to_string();
        let value: f64 = record[2].trim().parse().map_err(|_| {
            CliError::usage(format!("line {line}: value '{}' is not a number", &record[2]))
        })?;
        if !component_names.contains(&comp) {
            component_names.push(comp.clone());
        }
        if !table.contains_key(&time) {
            order.push(time.clone());
        }
        table.entry(time).or_default().insert(comp, value);
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for time in order {
        let by_comp = &table[&time];
        let mut shares = Vec::with_capacity(component_names.len());
        for name in &component_names {
            let v = *by_comp.get(name).ok_or_else(|| {
                CliError::usage(format!("time '{time}' is missing component '{name}'"))
            })?;
            shares.push(v);
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(CliError::usage(format!(
                "time '{time}': shares sum to {sum}, outside 1 ± {ROW_SUM_TOLERANCE}"
            )));
        }
        for v in &mut shares {
            *v /= sum;
        }
        labels.push(time);
        rows.push(Composition::new(shares).map_err(|e| CliError::usage(e.to_string()))?);
    }
    let series = CompositionalSeries::new(rows, labels)?;
    Ok(LoadedSeries { series, component_names })
}

/// Continues a time index: integer labels increment, ISO dates advance by one
/// day, anything else gets a positional suffix.
pub fn continue_labels(last: &str, horizon: usize) -> Vec<String> {
    if let Ok(n) = last.parse::<i64>() {
        return (1..=horizon as i64).map(|s| (n + s).to_string()).collect();
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(last, "%Y-%m-%d") {
        return (1..=horizon as i64)
            .map(|s| (date + chrono::Duration::days(s)).format("%Y-%m-%d").to_string())
            .collect();
    }
    (1..=horizon).map(|s| format!("{last}+{s}")).collect()
}

/// Writes the draw file: one row per retained draw with chain and draw
/// indices followed by the named parameters on the constrained scale.
pub fn write_draws_csv(path: &Path, draws: &PosteriorDraws) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(draws.names.iter().cloned());
    writer.write_record(&header)?;
    let mut per_chain_counter = vec![0usize; draws.n_chains];
    for (row, &chain) in draws.chain_ids.iter().enumerate() {
        let mut record = vec![chain.to_string(), per_chain_counter[chain].to_string()];
        per_chain_counter[chain] += 1;
        record.extend(draws.draws[row].iter().map(|v| format!("{v:.17e}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a draw file back into memory.
pub fn read_draws_csv(path: &Path, expected_names: &[String]) -> CliResult<PosteriorDraws> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().skip(2).map(|s| s.to_string()).collect();
    if names != expected_names {
        return Err(CliError::usage(
            "draw file parameters do not match the configured model".to_string(),
        ));
    }
    let mut draws = Vec::new();
    let mut chain_ids = Vec::new();
    for record in reader.records() {
        let record = record?;
        let chain: usize = record[0]
            .parse()
            .map_err(|_| CliError::usage("bad chain index in draw file".to_string()))?;
        let mut row = Vec::with_capacity(names.len());
        for field in record.iter().skip(2) {
            row.push(field.parse::<f64>().map_err(|_| {
                CliError::usage("bad numeric value in draw file".to_string())
            })?);
        }
        draws.push(row);
        chain_ids.push(chain);
    }
    if draws.is_empty() {
        return Err(CliError::usage("draw file has no rows".to_string()));
    }
    let n_chains = chain_ids.iter().max().unwrap() + 1;
    let n_keep = draws.len() / n_chains;
    Ok(PosteriorDraws {
        draws,
        chain_ids,
        names,
        chain_stats: vec![
            ChainStats { accept_rate: f64::NAN, divergences: 0, max_depth_hits: 0, step_size: f64::NAN };
            n_chains
        ],
        n_chains,
        n_keep,
    })
}

/// Forecast CSV: time, component, point, and 95/50 interval bounds.
pub fn write_forecast_csv(
    path: &Path,
    labels: &[String],
    component_names: &[String],
    result: &ForecastResult,
    wide_interval: &IntervalSet,
    narrow_interval: &IntervalSet,
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "time",
        "component",
        "point",
        "lower_95",
        "upper_95",
        "lower_50",
        "upper_50",
    ])?;
    for s in 0..result.horizon {
        for (c, name) in component_names.iter().enumerate() {
            writer.write_record([
                labels[s].as_str(),
                name.as_str(),
                &format!("{:.12}", result.point[s][c]),
                &format!("{:.12}", wide_interval.lower[s][c]),
                &format!("{:.12}", wide_interval.upper[s][c]),
                &format!("{:.12}", narrow_interval.lower[s][c]),
                &format!("{:.12}", narrow_interval.upper[s][c]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One parsed forecast row.
#[derive(Debug, Clone)]
pub struct ForecastRow {
    pub time: String,
    pub component: String,
    pub point: f64,
    pub lower_95: Option<f64>,
    pub upper_95: Option<f64>,
}

pub fn read_forecast_csv(path: &Path) -> CliResult<Vec<ForecastRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let time_col = col("time").ok_or_else(|| CliError::usage("missing 'time' column".to_string()))?;
    let comp_col =
        col("component").ok_or_else(|| CliError::usage("missing 'component' column".to_string()))?;
    let point_col =
        col("point").ok_or_else(|| CliError::usage("missing 'point' column".to_string()))?;
    let lo_col = col("lower_95");
    let hi_col = col("upper_95");
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |idx: usize| -> CliResult<f64> {
            record[idx]
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad number '{}'", &record[idx])))
        };
        rows.push(ForecastRow {
            time: record[time_col].to_string(),
            component: record[comp_col].to_string(),
            point: parse(point_col)?,
            lower_95: lo_col.map(parse).transpose()?,
            upper_95: hi_col.map(parse).transpose()?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::usage("forecast file has no rows".to_string()));
    }
    Ok(rows)
}

/// Metrics CSV (raw, unscaled values) plus a rendered table with the display
/// scale applied.
pub fn write_metrics_csv(
    path: &Path,
    component_names: &[String],
    report: &MetricsReport,
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["component", "frmse", "fmae", "frss", "coverage_95"])?;
    for (c, name) in component_names.iter().enumerate() {
        writer.write_record([
            name.as_str(),
            &format!("{:.12}", report.frmse.per_component[c]),
            &format!("{:.12}", report.fmae.per_component[c]),
            &format!("{:.12}", report.frss.per_component[c]),
            &report
                .coverage
                .as_ref()
                .map(|cov| format!("{:.6}", cov.per_component[c]))
                .unwrap_or_default(),
        ])?;
    }
    writer.write_record([
        "mean",
        &format!("{:.12}", report.frmse.mean),
        &format!("{:.12}", report.fmae.mean),
        &format!("{:.12}", report.frss.total / component_names.len() as f64),
        &report
            .coverage
            .as_ref()
            .map(|cov| format!("{:.6}", cov.mean))
            .unwrap_or_default(),
    ])?;
    writer.write_record([
        "total",
        "",
        &format!("{:.12}", report.fmae_total),
        &format!("{:.12}", report.frss.total),
        "",
    ])?;
    writer.flush()?;
    Ok(())
}

pub fn render_metrics_table(component_names: &[String], report: &MetricsReport) -> String {
    let s = report.scale_factor;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>12} {:>12} {:>12} {:>12}\n",
        "component", "FRMSE", "FMAE", "FRSS", "coverage95"
    ));
    for (c, name) in component_names.iter().enumerate() {
        let cov = report
            .coverage
            .as_ref()
            .map(|cv| format!("{:.3}", cv.per_component[c]))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<12} {:>12.4} {:>12.4} {:>12.4} {:>12}\n",
            name,
            report.frmse.per_component[c] * s,
            report.fmae.per_component[c] * s,
            report.frss.per_component[c] * s,
            cov
        ));
    }
    let cov_mean = report
        .coverage
        .as_ref()
        .map(|cv| format!("{:.3}", cv.mean))
        .unwrap_or_else(|| "-".into());
    out.push_str(&format!(
        "{:<12} {:>12.4} {:>12.4} {:>12.4} {:>12}\n",
        "mean",
        report.frmse.mean * s,
        report.fmae.mean * s,
        report.frss.total * s / component_names.len() as f64,
        cov_mean
    ));
    out.push_str(&format!(
        "{:<12} {:>12} {:>12.4} {:>12.4} {:>12}\n",
        "total",
        "-",
        report.fmae_total * s,
        report.frss.total * s,
        "-"
    ));
    out.push_str(&format!("(values scaled by {s} for display; stored CSV is unscaled)\n"));
    out
}
