use serde::{Deserialize, Serialize};

use super::fit::predictions;
use super::metrics::{mae, mse};
use crate::data::WindowedDataset;
use crate::error::{FateError, Result};
use crate::model::{FateWeights, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub station: String,
    pub feature: String,
    pub horizon: usize,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    pub per_target: Vec<TargetMetrics>,
}

/// Metrics on predictions given as `[sample][target]` in scaled units.
/// Both sides are mapped back to original units first.
pub fn metrics_from_predictions(ds: &WindowedDataset, pred: &[f64]) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(FateError::contract("cannot evaluate an empty split"));
    }
    let n = ds.n_targets();
    if pred.len() != ds.len() * n {
        return Err(FateError::contract(format!(
            "{} predictions for {} samples × {n} targets",
            pred.len(),
            ds.len()
        )));
    }
    let per_target = ds
        .targets
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let sp = ds
                .target_scaling
                .get(j)
                .copied()
                .flatten()
                .ok_or_else(|| FateError::contract(format!("no scaling parameters for target {}", t.label())))?;
            let p: Vec<f64> = pred.iter().skip(j).step_by(n).map(|&v| sp.invert(v)).collect();
            let a: Vec<f64> = ds.samples.iter().map(|s| sp.invert(s.target[j])).collect();
            Ok(TargetMetrics {
                station: t.station.clone(),
                feature: t.feature.clone(),
                horizon: t.horizon,
                mae: mae(&p, &a)?,
                mse: mse(&p, &a)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        samples: ds.len(),
        per_target,
    })
}

/// MAE and MSE per target in original units.
pub fn evaluate(weights: &FateWeights, cfg: &ModelConfig, ds: &WindowedDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(FateError::contract("cannot evaluate an empty split"));
    }
    let (pred, _) = predictions(weights, cfg, ds, 64)?;
    metrics_from_predictions(ds, &pred)
}
