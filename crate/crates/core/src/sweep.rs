//! Two-stage validation-grid model selection: seasonal order first at fixed
//! lag orders, then the lag orders at the winning seasonal order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ar_order: usize,
    pub ma_order: usize,
    pub fourier_year: usize,
    /// Average forecast mean absolute error on the validation window.
    pub fmae: f64,
    /// Total forecast residual sum of squares on the validation window.
    pub frss: f64,
}

/// Outcome of the two-stage selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChoice {
    pub stage1_winner: SweepCell,
    pub best_fourier: usize,
    pub winner: SweepCell,
}

fn better(a: &SweepCell, b: &SweepCell) -> std::cmp::Ordering {
    a.fmae
        .partial_cmp(&b.fmae)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then((a.ar_order + a.ma_order).cmp(&(b.ar_order + b.ma_order)))
        .then(a.fourier_year.cmp(&b.fourier_year))
        .then(a.ar_order.cmp(&b.ar_order))
        .then(a.ma_order.cmp(&b.ma_order))
}

/// Selection criterion is the validation FMAE; ties break toward smaller
/// P + Q, then smaller seasonal order. Stage 1 varies the yearly Fourier
/// order at (P, Q) = (1, 0); stage 2 varies (P, Q) at the stage-1 winner.
pub fn select(stage1: &[SweepCell], stage2: &[SweepCell]) -> Result<SweepChoice> {
    if stage1.is_empty() {
        return Err(Error::Config("stage-1 grid is empty".into()));
    }
    if stage1.iter().any(|c| c.ar_order != 1 || c.ma_order != 0) {
        return Err(Error::Config("stage-1 cells must hold (P, Q) = (1, 0)".into()));
    }
    if stage1.iter().any(|c| !c.fmae.is_finite()) {
        return Err(Error::Data("non-finite stage-1 metric".into()));
    }
    let stage1_winner = stage1.iter().min_by(|a, b| better(a, b)).unwrap().clone();
    let best_fourier = stage1_winner.fourier_year;

    if stage2.is_empty() {
        // Single-stage grid: the stage-1 winner stands.
        return Ok(SweepChoice { winner: stage1_winner.clone(), best_fourier, stage1_winner });
    }
    if stage2.iter().any(|c| c.fourier_year != best_fourier) {
        return Err(Error::Config(format!(
            "stage-2 cells must hold the stage-1 seasonal order {best_fourier}"
        )));
    }
    if stage2.iter().any(|c| !c.fmae.is_finite()) {
        return Err(Error::Data("non-finite stage-2 metric".into()));
    }
    let winner = stage2.iter().min_by(|a, b| better(a, b)).unwrap().clone();
    Ok(SweepChoice { stage1_winner, best_fourier, winner })
}
