use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::frame::FeatureFrame;
use super::scale::ScalingParams;
use crate::error::{FateError, Result};
use crate::tensor::Tensor;

/// One predicted quantity: `feature` at `station`, `horizon` steps after the
/// last input row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub station: String,
    pub feature: String,
    pub horizon: usize,
}

impl TargetSpec {
    pub fn label(&self) -> String {
        format!("{}:{}+{}", self.station, self.feature, self.horizon)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    /// `T×S×P` inputs.
    pub x: Tensor,
    pub target: Vec<f64>,
    pub start_row: usize,
    pub input_end: NaiveDateTime,
    /// Timestamp of each target, aligned with `target`.
    pub target_times: Vec<NaiveDateTime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub lag: usize,
    pub stations: Vec<String>,
    pub features: Vec<String>,
    pub targets: Vec<TargetSpec>,
    /// Min-max parameters of each target's feature, for reporting in original units.
    pub target_scaling: Vec<Option<ScalingParams>>,
    pub samples: Vec<WindowedSample>,
}

/// Number of windows a gap-free series of `rows` rows yields.
pub fn window_count(rows: usize, lag: usize, max_horizon: usize) -> usize {
    (rows + 1).saturating_sub(lag + max_horizon)
}

/// Sample `i` takes rows `[i, i+T)`; target `j` is read at row `i+T+Δ_j−1`.
/// With several horizons the sample count is set by the largest one.
pub fn window(frame: &FeatureFrame, lag: usize, targets: &[TargetSpec]) -> Result<WindowedDataset> {
    if lag == 0 {
        return Err(FateError::contract("lag must be at least 1"));
    }
    if targets.is_empty() {
        return Err(FateError::contract("no targets"));
    }
    if let Some(t) = targets.iter().find(|t| t.horizon == 0) {
        return Err(FateError::contract(format!("target {} has horizon 0", t.label())));
    }
    let max_h = targets.iter().map(|t| t.horizon).max().unwrap();
    if frame.rows() < lag + max_h {
        return Err(FateError::contract(format!(
            "series of {} rows is shorter than lag {lag} + horizon {max_h}",
            frame.rows()
        )));
    }
    let idx: Vec<(usize, usize)> = targets
        .iter()
        .map(|t| Ok((frame.station_index(&t.station)?, frame.feature_index(&t.feature)?)))
        .collect::<Result<_>>()?;
    let shape = [lag, frame.stations.len(), frame.features.len()];
    let samples = (0..window_count(frame.rows(), lag, max_h))
        .map(|i| {
            let rows: Vec<usize> = targets.iter().map(|t| i + lag + t.horizon - 1).collect();
            Ok(WindowedSample {
                x: Tensor::new(&shape, frame.block(i, lag).to_vec())?,
                target: rows.iter().zip(&idx).map(|(&r, &(s, f))| frame.get(r, s, f)).collect(),
                start_row: i,
                input_end: frame.timestamps[i + lag - 1],
                target_times: rows.iter().map(|&r| frame.timestamps[r]).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(WindowedDataset {
        lag,
        stations: frame.stations.clone(),
        features: frame.features.clone(),
        targets: targets.to_vec(),
        target_scaling: vec![None; targets.len()],
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn max_horizon(&self) -> usize {
        self.targets.iter().map(|t| t.horizon).max().unwrap_or(0)
    }

    pub fn inputs(&self) -> Vec<&Tensor> {
        self.samples.iter().map(|s| &s.x).collect()
    }

    pub fn target_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.target.clone()).collect()
    }

    pub fn with_samples(&self, samples: Vec<WindowedSample>) -> Self {
        Self {
            samples,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            lag: self.lag,
            stations: self.stations.clone(),
            features: self.features.clone(),
            targets: self.targets.clone(),
            target_scaling: self.target_scaling.clone(),
            samples: Vec::new(),
        }
    }

    /// True when every input row precedes all of the sample's target timestamps.
    pub fn leakage_free(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.target_times.iter().all(|&t| s.input_end < t))
    }

    /// Mean of one feature over all inputs, stations and lags.
    pub fn feature_mean(&self, feature: usize) -> Result<f64> {
        if self.is_empty() {
            return Err(FateError::contract("feature mean of an empty dataset"));
        }
        let p = self.features.len();
        let (sum, n) = self
            .samples
            .iter()
            .flat_map(|s| s.x.data().iter().skip(feature).step_by(p))
            .fold((0.0, 0usize), |(acc, n), v| (acc + v, n + 1));
        Ok(sum / n as f64)
    }
}

/// Earliest samples to train, then validation, then test.
pub fn chronological_split(
    dataset: &WindowedDataset,
    counts: SplitCounts,
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    if counts.total() > dataset.len() {
        return Err(FateError::contract(format!(
            "split {}+{}+{} exceeds {} samples",
            counts.train,
            counts.val,
            counts.test,
            dataset.len()
        )));
    }
    let s = &dataset.samples;
    let (a, b) = (counts.train, counts.train + counts.val);
    Ok((
        dataset.with_samples(s[..a].to_vec()),
        dataset.with_samples(s[a..b].to_vec()),
        dataset.with_samples(s[b..b + counts.test].to_vec()),
    ))
}
