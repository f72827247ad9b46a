use serde::{Deserialize, Serialize};

use super::correlation::csv_field;
use crate::data::WindowedDataset;
use crate::error::{FateError, Result};
use crate::model::{encoder_forward_batch, FateWeights, ModelConfig, ModulationTensors, SoftmaxAxis};
use crate::train::{metrics_from_predictions, predictions};

pub const SURROGATE_LABEL: &str = "surrogate: mean attention mass";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEffect {
    pub parameter: String,
    pub mae_full: f64,
    pub mae_ablated: f64,
    pub effect_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationReport {
    pub definition: String,
    pub axis: SoftmaxAxis,
    pub horizon_label: String,
    pub layer: usize,
    pub samples: usize,
    pub stations: Vec<String>,
    /// `scores[h][s]`, a probability vector per head.
    pub scores: Vec<Vec<f64>>,
    /// Mean over heads, per station.
    pub aggregate: Vec<f64>,
    pub parameter_effects: Vec<ParameterEffect>,
}

impl ModulationReport {
    /// `head,station,score`, one row per head and station.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("head,station,score\n");
        for (h, row) in self.scores.iter().enumerate() {
            for (st, v) in self.stations.iter().zip(row) {
                s.push_str(&format!("{h},{},{v}\n", csv_field(st)));
            }
        }
        s
    }
}

/// Mean of `Ã[t, t', s]` over samples and both time indices, per head and
/// station, renormalized so each head's scores sum to one.
pub fn modulation_scores(
    diagnostics: &[&ModulationTensors],
    stations: &[String],
    horizon_label: &str,
    layer: usize,
) -> Result<ModulationReport> {
    let first = diagnostics.first().ok_or_else(|| FateError::contract("no modulation diagnostics"))?;
    let heads = first.heads.len();
    let s = stations.len();
    let mut scores = vec![vec![0.0; s]; heads];
    for d in diagnostics {
        if d.heads.len() != heads {
            return Err(FateError::contract("diagnostics disagree on head count"));
        }
        for (h, hm) in d.heads.iter().enumerate() {
            let shape = hm.atilde.shape();
            if shape.len() != 3 || shape[2] != s {
                return Err(FateError::shape("modulation_scores", shape, &[0, 0, s]));
            }
            for (i, v) in hm.atilde.data().iter().enumerate() {
                scores[h][i % s] += v;
            }
        }
    }
    for row in &mut scores {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(FateError::numeric("modulation scores"));
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    let aggregate = (0..s)
        .map(|st| scores.iter().map(|r| r[st]).sum::<f64>() / heads as f64)
        .collect();
    Ok(ModulationReport {
        definition: SURROGATE_LABEL.into(),
        axis: first.axis,
        horizon_label: horizon_label.into(),
        layer,
        samples: diagnostics.len(),
        stations: stations.to_vec(),
        scores,
        aggregate,
        parameter_effects: Vec::new(),
    })
}

/// Runs the model over `ds` and scores attention of encoder layer `layer`.
pub fn modulation_report(
    weights: &FateWeights,
    cfg: &ModelConfig,
    ds: &WindowedDataset,
    layer: usize,
) -> Result<ModulationReport> {
    if layer >= cfg.num_layers {
        return Err(FateError::contract(format!("layer {layer} out of range for {} layers", cfg.num_layers)));
    }
    let mut diags = Vec::with_capacity(ds.len());
    for chunk in ds.samples.chunks(64) {
        let xs: Vec<_> = chunk.iter().map(|s| &s.x).collect();
        for (_, mut layers) in encoder_forward_batch(&xs, weights, cfg)? {
            diags.push(layers.swap_remove(layer));
        }
    }
    let refs: Vec<&ModulationTensors> = diags.iter().collect();
    let label = ds.targets.iter().map(|t| t.label()).collect::<Vec<_>>().join(";");
    modulation_scores(&refs, &ds.stations, &label, layer)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Replacement {
    /// Every occurrence of the parameter is set to this (scaled) value.
    Value(f64),
    /// Leave the column as is.
    Keep,
}

fn mean_mae(weights: &FateWeights, cfg: &ModelConfig, ds: &WindowedDataset) -> Result<f64> {
    let (pred, _) = predictions(weights, cfg, ds, 64)?;
    let ev = metrics_from_predictions(ds, &pred)?;
    Ok(ev.per_target.iter().map(|t| t.mae).sum::<f64>() / ev.per_target.len() as f64)
}

/// `100·(MAE_ablated − MAE_full)/MAE_full` with `parameter` replaced at every
/// station and lag. MAE is averaged over targets, in original units.
pub fn ablation_effect(
    weights: &FateWeights,
    cfg: &ModelConfig,
    ds: &WindowedDataset,
    parameter: &str,
    replacement: Replacement,
) -> Result<ParameterEffect> {
    let p = ds
        .features
        .iter()
        .position(|f| f == parameter)
        .ok_or_else(|| FateError::contract(format!("unknown parameter {parameter:?}")))?;
    let mae_full = mean_mae(weights, cfg, ds)?;
    let mae_ablated = match replacement {
        Replacement::Keep => mae_full,
        Replacement::Value(v) => {
            let np = ds.features.len();
            let samples = ds
                .samples
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.x.data_mut().iter_mut().skip(p).step_by(np).for_each(|x| *x = v);
                    s
                })
                .collect();
            mean_mae(weights, cfg, &ds.with_samples(samples))?
        }
    };
    if mae_full == 0.0 {
        return Err(FateError::contract("full-model MAE is zero; effect percentage undefined"));
    }
    Ok(ParameterEffect {
        parameter: parameter.into(),
        mae_full,
        mae_ablated,
        effect_percent: 100.0 * (mae_ablated - mae_full) / mae_full,
    })
}

/// Ablation with the parameter's mean over the training inputs.
pub fn ablation_with_train_mean(
    weights: &FateWeights,
    cfg: &ModelConfig,
    train: &WindowedDataset,
    eval: &WindowedDataset,
    parameter: &str,
) -> Result<ParameterEffect> {
    let p = train
        .features
        .iter()
        .position(|f| f == parameter)
        .ok_or_else(|| FateError::contract(format!("unknown parameter {parameter:?}")))?;
    ablation_effect(weights, cfg, eval, parameter, Replacement::Value(train.feature_mean(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadModulation;
    use crate::tensor::Tensor;

    fn diag(atilde: Tensor) -> ModulationTensors {
        let z = Tensor::zeros(&[1]).unwrap();
        ModulationTensors {
            axis: SoftmaxAxis::Stations,
            heads: vec![HeadModulation {
                q: z.clone(),
                k: z.clone(),
                v: z.clone(),
                rtilde: z.clone(),
                r: z.clone(),
                atilde,
                a: z.clone(),
            }],
            y: z,
        }
    }

    #[test]
    fn uniform_and_one_hot() {
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        let u = diag(Tensor::full(&[2, 2, 4], 0.25).unwrap());
        let r = modulation_scores(&[&u, &u], &names, "x", 0).unwrap();
        assert!(r.scores[0].iter().all(|v| (v - 0.25).abs() < 1e-15));
        let mut data = vec![0.0; 16];
        for t in 0..4 {
            data[t * 4 + 2] = 1.0;
        }
        let o = diag(Tensor::new(&[2, 2, 4], data).unwrap());
        let r = modulation_scores(&[&o], &names, "x", 0).unwrap();
        assert_eq!(r.scores[0], vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.aggregate, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.to_csv().lines().count(), 1 + 4);
        assert!(modulation_scores(&[], &names, "x", 0).is_err());
    }
}
