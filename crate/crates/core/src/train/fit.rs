use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::mse;
use super::optim::{adam_step, lr_schedule, AdamState};
use crate::data::WindowedDataset;
use crate::error::{FateError, Result};
use crate::model::{build_forward, predict_batch, FateWeights, ModelConfig, WeightVars};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrMode {
    Schedule,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub warmup_steps: usize,
    pub seed: u64,
    pub lr_mode: LrMode,
    /// Optional cap on optimizer steps; training stops mid-epoch once reached.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 64,
            patience: 10,
            warmup_steps: 400,
            seed: 0,
            lr_mode: LrMode::Schedule,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 || self.warmup_steps == 0 {
            return Err(FateError::contract(
                "max_epochs, batch_size, patience and warmup_steps must be at least 1",
            ));
        }
        if let LrMode::Fixed(v) = self.lr_mode {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FateError::contract(format!("fixed learning rate {v} must be finite and ≥ 0")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(FateError::contract("max_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Learning rate of the last step in the epoch.
    pub learning_rate: f64,
    /// Optimizer steps taken so far.
    pub steps: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    MaxSteps,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// `epoch,train_mse,val_mse,lr,steps`. Wall time is left out so reruns
    /// are byte-identical; see [`TrainHistory::timing_csv`].
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse,lr,steps\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_mse, e.val_mse, e.learning_rate, e.steps
            ));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,wall_ms\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.3}\n", e.epoch, e.wall_ms));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: FateWeights,
    pub history: TrainHistory,
}

pub fn check_dims(cfg: &ModelConfig, ds: &WindowedDataset) -> Result<()> {
    let shape = [ds.lag, ds.stations.len(), ds.features.len()];
    if shape != cfg.input_shape() || ds.n_targets() != cfg.n_targets {
        let mut got = shape.to_vec();
        got.push(ds.n_targets());
        let mut want = cfg.input_shape().to_vec();
        want.push(cfg.n_targets);
        return Err(FateError::shape("dataset vs model", &got, &want));
    }
    Ok(())
}

/// Mean squared error on the dataset's (scaled) targets.
pub fn dataset_mse(weights: &FateWeights, cfg: &ModelConfig, ds: &WindowedDataset, batch: usize) -> Result<f64> {
    let (pred, actual) = predictions(weights, cfg, ds, batch)?;
    mse(&pred, &actual)
}

/// Flattened predictions and targets, sample-major.
pub fn predictions(
    weights: &FateWeights,
    cfg: &ModelConfig,
    ds: &WindowedDataset,
    batch: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(cfg, ds)?;
    let mut pred = Vec::with_capacity(ds.len() * cfg.n_targets);
    for chunk in ds.samples.chunks(batch.max(1)) {
        let xs: Vec<&Tensor> = chunk.iter().map(|s| &s.x).collect();
        pred.extend(predict_batch(weights, cfg, &xs)?.into_iter().flatten());
    }
    let actual = ds.samples.iter().flat_map(|s| s.target.iter().copied()).collect();
    Ok((pred, actual))
}

/// Mean-over-elements MSE of one minibatch and its gradients in canonical order.
pub fn batch_loss_and_grads(
    weights: &FateWeights,
    cfg: &ModelConfig,
    xs: &[&Tensor],
    targets: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let wv = WeightVars::register(&mut g, weights, true);
    let x = g.constant(Tensor::stack(xs)?);
    let fwd = build_forward(&mut g, x, &wv, cfg)?;
    let y = g.constant(Tensor::new(&[xs.len(), cfg.n_targets], targets.to_vec())?);
    let diff = g.sub(fwd.prediction, y)?;
    let sq = g.mul(diff, diff)?;
    let loss = g.mean(sq);
    g.backward(loss)?;
    Ok((g.value(loss).item()?, wv.gradients(&g)))
}

/// Minibatch Adam with seeded shuffling and early stopping on validation MSE.
/// Returns the weights of the best validation epoch.
pub fn train(
    cfg: &ModelConfig,
    init: &FateWeights,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    init.validate(cfg)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(FateError::contract("training and validation splits must be nonempty"));
    }
    check_dims(cfg, train_set)?;
    check_dims(cfg, val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut weights = init.clone();
    let mut state = AdamState::new(&weights.tensors());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, FateWeights)> = None;
    let mut since_best = 0;
    let mut step = 0;
    let mut lr = 0.0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=tc.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            step += 1;
            lr = match tc.lr_mode {
                LrMode::Schedule => lr_schedule(step, cfg.d_model(), tc.warmup_steps)?,
                LrMode::Fixed(v) => v,
            };
            let xs: Vec<&Tensor> = idx.iter().map(|&i| &train_set.samples[i].x).collect();
            let ys: Vec<f64> = idx
                .iter()
                .flat_map(|&i| train_set.samples[i].target.iter().copied())
                .collect();
            let (loss, grads) = batch_loss_and_grads(&weights, cfg, &xs, &ys).map_err(|e| match e {
                FateError::Numeric { stage } => FateError::Numeric {
                    stage: format!("epoch {epoch} batch {b}: {stage}"),
                },
                other => other,
            })?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(FateError::numeric(format!("epoch {epoch} batch {b}: loss")));
            }
            adam_step(&mut weights.tensors_mut(), &grads, &mut state, lr)?;
            if tc.max_steps.is_some_and(|m| step >= m) {
                stop_reason = StopReason::MaxSteps;
                break;
            }
        }
        let train_mse = dataset_mse(&weights, cfg, train_set, tc.batch_size)?;
        let val_mse = dataset_mse(&weights, cfg, val_set, tc.batch_size)?;
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(FateError::numeric(format!("epoch {epoch}: evaluation")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            learning_rate: lr,
            steps: step,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        log::info!("epoch {epoch}: train_mse {train_mse:.6e} val_mse {val_mse:.6e} lr {lr:.3e}");
        if best.as_ref().is_none_or(|(_, v, _)| val_mse < *v) {
            best = Some((epoch, val_mse, weights.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if stop_reason == StopReason::MaxSteps {
            break;
        }
        if since_best >= tc.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }
    let (best_epoch, _, best_weights) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        weights: best_weights,
        history: TrainHistory {
            stopped_epoch: epochs.len(),
            epochs,
            best_epoch,
            stop_reason,
        },
    })
}
