use std::path::PathBuf;

use clap::Args;

use bdarch::covariates::{build_designs, CovariateSpec, SeasonalBlock};
use bdarch::forecast::{interval, predict};
use bdarch::inference::sample_posterior;
use bdarch::metrics::{fmae, frss};
use bdarch::sweep::{select, SweepCell, SweepChoice};

use crate::commands::{ensure_out_dir, resolve_seed};
use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};
use crate::io;

#[derive(Args)]
pub struct SweepArgs {
    /// Precomputed validation metrics (ar_order, ma_order, fourier_year,
    /// fmae, frss); selection only, no fitting.
    #[arg(long)]
    pub metrics_csv: Option<PathBuf>,
    /// Share table for the fitting mode.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Yearly Fourier orders for stage 1.
    #[arg(long, default_value = "6,8,10,12,14,16,18")]
    pub k_year_grid: String,
    /// Lag orders P:Q for stage 2.
    #[arg(long, default_value = "0:1,1:1,1:2,1:3,2:1,2:2,2:3,3:1,3:2,3:3")]
    pub pq_grid: String,
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long)]
    pub validation_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_usize_list(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad grid entry '{t}'")))
        })
        .collect()
}

fn parse_pq_list(s: &str) -> CliResult<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (p, q) = t
                .trim()
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("bad P:Q entry '{t}'")))?;
            Ok((
                p.parse().map_err(|_| CliError::usage(format!("bad P in '{t}'")))?,
                q.parse().map_err(|_| CliError::usage(format!("bad Q in '{t}'")))?,
            ))
        })
        .collect()
}

fn read_cells(path: &PathBuf) -> CliResult<Vec<SweepCell>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(format!("metrics csv missing column '{name}'")))
    };
    let (pc, qc, fc, mc, rc) =
        (col("ar_order")?, col("ma_order")?, col("fourier_year")?, col("fmae")?, col("frss")?);
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse_usize = |i: usize| -> CliResult<usize> {
            record[i].trim().parse().map_err(|_| CliError::usage("bad integer in metrics csv"))
        };
        let parse_f64 = |i: usize| -> CliResult<f64> {
            record[i].trim().parse().map_err(|_| CliError::usage("bad number in metrics csv"))
        };
        cells.push(SweepCell {
            ar_order: parse_usize(pc)?,
            ma_order: parse_usize(qc)?,
            fourier_year: parse_usize(fc)?,
            fmae: parse_f64(mc)?,
            frss: parse_f64(rc)?,
        });
    }
    if cells.is_empty() {
        return Err(CliError::usage("metrics csv has no cells".to_string()));
    }
    Ok(cells)
}

/// Replaces (or appends) the yearly seasonal block's harmonic count.
fn with_yearly_harmonics(base: &CovariateSpec, k: usize) -> CovariateSpec {
    let mut spec = base.clone();
    if let Some(block) = spec.seasonal_blocks.iter_mut().find(|b| b.period > 300.0) {
        block.harmonics = k;
    } else {
        spec.seasonal_blocks.push(SeasonalBlock { period: 365.25, harmonics: k });
    }
    spec
}

fn fit_cell(
    cfg: &RunConfig,
    loaded: &io::LoadedSeries,
    train_len: usize,
    valid_len: usize,
    p: usize,
    q: usize,
    k_year: usize,
    seed: u64,
) -> CliResult<SweepCell> {
    let mut cell_cfg = cfg.clone();
    cell_cfg.ar_order = p;
    cell_cfg.ma_order = q;
    cell_cfg.mean_covariates = with_yearly_harmonics(&cfg.mean_covariates, k_year);
    cell_cfg.prec_covariates = with_yearly_harmonics(&cfg.prec_covariates, k_year);
    let spec = cell_cfg.model_spec(&loaded.component_names)?;
    let priors = cell_cfg.priors.resolve()?;
    let train = loaded.series.head(train_len);
    let designs = build_designs(
        &spec.mean_covariates,
        &spec.prec_covariates,
        train_len + valid_len,
        spec.n_components,
        0,
        train_len as f64,
    )?;
    let sampler = bdarch::inference::SamplerConfig { base_seed: seed, ..cell_cfg.sampler.clone() };
    let (draws, _) = sample_posterior(&spec, &priors, &train, &designs, &sampler)?;
    let result = predict(&spec, &draws, &train, &designs, valid_len, seed ^ 0xF0CA)?;
    let _ = interval(&result, 0.95)?;
    let actual: Vec<Vec<f64>> = loaded.series.rows()[train_len..train_len + valid_len]
        .iter()
        .map(|r| r.values().to_vec())
        .collect();
    Ok(SweepCell {
        ar_order: p,
        ma_order: q,
        fourier_year: k_year,
        fmae: fmae(&actual, &result.point)?.mean,
        frss: frss(&actual, &result.point)?.total,
    })
}

fn write_cells(path: &PathBuf, cells: &[SweepCell]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["ar_order", "ma_order", "fourier_year", "fmae", "frss"])?;
    for c in cells {
        writer.write_record([
            c.ar_order.to_string(),
            c.ma_order.to_string(),
            c.fourier_year.to_string(),
            format!("{:.12}", c.fmae),
            format!("{:.12}", c.frss),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn render_choice(choice: &SweepChoice) -> String {
    format!(
        "stage 1 winner: K_year = {} (FMAE {:.4}, FRSS {:.4})\nfinal: (P, Q) = ({}, {}), K_year = {} (FMAE {:.4}, FRSS {:.4})\n",
        choice.best_fourier,
        choice.stage1_winner.fmae,
        choice.stage1_winner.frss,
        choice.winner.ar_order,
        choice.winner.ma_order,
        choice.winner.fourier_year,
        choice.winner.fmae,
        choice.winner.frss,
    )
}

pub fn run(args: SweepArgs) -> CliResult<()> {
    let out = ensure_out_dir(args.out.as_deref())?;
    let k_grid = parse_usize_list(&args.k_year_grid)?;
    if k_grid.is_empty() {
        return Err(CliError::usage("empty stage-1 grid".to_string()));
    }

    let (stage1, stage2) = if let Some(path) = &args.metrics_csv {
        // Selection-only mode on precomputed validation metrics.
        let cells = read_cells(path)?;
        let stage1: Vec<SweepCell> = cells
            .iter()
            .filter(|c| c.ar_order == 1 && c.ma_order == 0)
            .cloned()
            .collect();
        if stage1.is_empty() {
            return Err(CliError::usage("no (P, Q) = (1, 0) cells for stage 1".to_string()));
        }
        let best_fourier = select(&stage1, &[])?.best_fourier;
        let stage2: Vec<SweepCell> = cells
            .iter()
            .filter(|c| c.fourier_year == best_fourier)
            .cloned()
            .collect();
        (stage1, stage2)
    } else {
        let data = args
            .data
            .as_ref()
            .ok_or_else(|| CliError::usage("need --data (or --metrics-csv)".to_string()))?;
        let mut cfg = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = args.train_len {
            cfg.train_len = Some(v);
        }
        if let Some(v) = args.validation_len {
            cfg.validation_len = Some(v);
        }
        let loaded = if cfg.long_format {
            io::read_long_csv(data)?
        } else {
            io::read_wide_csv(data)?
        };
        let train_len = cfg
            .train_len
            .ok_or_else(|| CliError::usage("sweep needs train_len".to_string()))?;
        let valid_len = cfg
            .validation_len
            .ok_or_else(|| CliError::usage("sweep needs validation_len".to_string()))?;
        if train_len + valid_len > loaded.series.len() {
            return Err(CliError::usage(format!(
                "train {train_len} + validation {valid_len} exceed {} rows",
                loaded.series.len()
            )));
        }
        let seed = resolve_seed(args.seed, cfg.seed);
        let mut stage1 = Vec::new();
        for (i, &k) in k_grid.iter().enumerate() {
            let cell =
                fit_cell(&cfg, &loaded, train_len, valid_len, 1, 0, k, seed.wrapping_add(i as u64))?;
            println!(
                "stage 1: (1, 0) K_year {k}: FMAE {:.5}, FRSS {:.5}",
                cell.fmae, cell.frss
            );
            stage1.push(cell);
        }
        let best_fourier = select(&stage1, &[])?.best_fourier;
        let mut stage2: Vec<SweepCell> = stage1
            .iter()
            .filter(|c| c.fourier_year == best_fourier)
            .cloned()
            .collect();
        for (i, &(p, q)) in parse_pq_list(&args.pq_grid)?.iter().enumerate() {
            let cell = fit_cell(
                &cfg,
                &loaded,
                train_len,
                valid_len,
                p,
                q,
                best_fourier,
                seed.wrapping_add(1000 + i as u64),
            )?;
            println!(
                "stage 2: ({p}, {q}) K_year {best_fourier}: FMAE {:.5}, FRSS {:.5}",
                cell.fmae, cell.frss
            );
            stage2.push(cell);
        }
        (stage1, stage2)
    };

    let choice = select(&stage1, &stage2)?;
    write_cells(&out.join("sweep_stage1.csv"), &stage1)?;
    write_cells(&out.join("sweep_stage2.csv"), &stage2)?;
    std::fs::write(out.join("sweep_choice.json"), serde_json::to_string_pretty(&choice)?)?;
    print!("{}", render_choice(&choice));
    println!("sweep artifacts in {}", out.display());
    Ok(())
}
