//! Mask-level evaluation: Betti error and relaxed correctness/completeness/quality.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubical::{build_complex, compute_persistence};
use crate::error::{Error, Result};
use crate::filtration::{combine, FiltrationSpec};
use crate::grid::{same_shape, squared_distance_transform, BinaryMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BettiConfig {
    pub patch: usize,
    pub trials: usize,
    pub patches_per_trial: usize,
}

impl Default for BettiConfig {
    fn default() -> Self {
        BettiConfig {
            patch: 64,
            trials: 10,
            patches_per_trial: 10,
        }
    }
}

/// Number of independent loops of the foreground of `mask`.
pub fn loop_count(mask: &BinaryMask) -> Result<usize> {
    let field = combine(&mask.to_field(), &FiltrationSpec::plain())?;
    Ok(compute_persistence(&build_complex(&field), 1)?.betti(1, 0.5))
}

/// Mean absolute difference of loop counts over random co-located patches.
pub fn betti_error<R: Rng + ?Sized>(
    pred: &BinaryMask,
    gt: &BinaryMask,
    cfg: &BettiConfig,
    rng: &mut R,
) -> Result<f64> {
    same_shape(pred.shape(), gt.shape())?;
    if cfg.patch == 0 || cfg.trials == 0 || cfg.patches_per_trial == 0 {
        return Err(Error::param("patch size, trials and patches per trial must be positive"));
    }
    if pred.dims().iter().any(|&n| n < cfg.patch) {
        return Err(Error::WindowTooLarge {
            window: cfg.patch,
            shape: pred.dims().to_vec(),
        });
    }
    let size = vec![cfg.patch; pred.shape().ndim()];
    let origins: Vec<Vec<usize>> = (0..cfg.trials * cfg.patches_per_trial)
        .map(|_| {
            pred.dims()
                .iter()
                .map(|&n| rng.random_range(0..=n - cfg.patch))
                .collect()
        })
        .collect();
    // repeated origins (always the case when the patch covers the mask) are
    // evaluated once
    let mut distinct = origins.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let counted: Vec<Result<f64>> = distinct
        .par_iter()
        .map(|o| {
            let a = loop_count(&pred.crop(o, &size)?)?;
            let b = loop_count(&gt.crop(o, &size)?)?;
            Ok(a.abs_diff(b) as f64)
        })
        .collect();
    let counted: Vec<f64> = counted.into_iter().collect::<Result<_>>()?;
    let diffs: Vec<f64> = origins
        .iter()
        .map(|o| counted[distinct.binary_search(o).unwrap()])
        .collect();
    let per_trial = diffs
        .chunks(cfg.patches_per_trial)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64);
    Ok(per_trial.sum::<f64>() / cfg.trials as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ccq {
    pub correctness: f64,
    pub completeness: f64,
    pub quality: f64,
}

/// Relaxed precision (correctness), recall (completeness) and quality: a
/// pixel counts as matched when the other mask has a pixel within
/// `tolerance` (inclusive). An empty prediction has correctness 1.
pub fn ccq(pred: &BinaryMask, gt: &BinaryMask, tolerance: f64) -> Result<Ccq> {
    same_shape(pred.shape(), gt.shape())?;
    if !(tolerance >= 0.0) {
        return Err(Error::param(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let to_gt = squared_distance_transform(gt).ok_or(Error::EmptyMask)?;
    let tol2 = tolerance * tolerance;
    let near = |d2: f64| d2 <= tol2;

    let n_pred = pred.count();
    let correctness = if n_pred == 0 {
        1.0
    } else {
        let hit = pred
            .bits()
            .iter()
            .zip(&to_gt)
            .filter(|(&b, &d)| b && near(d))
            .count();
        hit as f64 / n_pred as f64
    };
    let completeness = match squared_distance_transform(pred) {
        None => 0.0,
        Some(to_pred) => {
            let hit = gt
                .bits()
                .iter()
                .zip(&to_pred)
                .filter(|(&b, &d)| b && near(d))
                .count();
            hit as f64 / gt.count() as f64
        }
    };
    let denom = correctness + completeness - correctness * completeness;
    let quality = if denom > 0.0 {
        correctness * completeness / denom
    } else {
        0.0
    };
    Ok(Ccq {
        correctness,
        completeness,
        quality,
    })
}
