use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::frame::{FeatureFrame, FeatureOptions, Scaler};
use super::impute::{impute, ImputeReport};
use super::table::{attach_coordinates, Coordinates, LoadOutcome, RejectedRow};
use super::window::{chronological_split, window, window_count, SplitCounts, TargetSpec, WindowedDataset, WindowedSample};
use crate::error::{FateError, Result};
use crate::format::{self, DATASET_MAGIC};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub lag: usize,
    pub targets: Vec<TargetSpec>,
    pub train: usize,
    pub val: usize,
    /// Remaining samples when absent.
    pub test: Option<usize>,
    pub features: FeatureOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub stations: Vec<String>,
    pub features: Vec<String>,
    pub rejected_rows: Vec<RejectedRow>,
    pub inserted_rows: usize,
    pub imputed: Vec<ImputeReport>,
    pub imputed_total: usize,
    pub degenerate_features: Vec<String>,
    pub samples: usize,
    pub split: SplitCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub dataset: WindowedDataset,
    pub split: SplitCounts,
    pub scaler: Scaler,
    pub report: IngestReport,
}

impl PreparedData {
    pub fn splits(&self) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
        chronological_split(&self.dataset, self.split)
    }
}

/// Coordinates, imputation, feature assembly, train-only scaling and windowing.
pub fn prepare(
    outcome: LoadOutcome,
    coords: Option<&BTreeMap<String, Coordinates>>,
    opts: &PrepareOptions,
) -> Result<PreparedData> {
    let LoadOutcome {
        mut tables,
        rejected,
        inserted_rows,
    } = outcome;
    if let Some(c) = coords {
        attach_coordinates(&mut tables, c)?;
    } else if opts.features.cartesian {
        return Err(FateError::MissingCoords(tables.iter().map(|t| t.station.clone()).collect()));
    }
    let (tables, imputed): (Vec<_>, Vec<_>) = tables.iter().map(impute).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let raw = FeatureFrame::assemble(&tables, opts.features)?;

    let max_h = opts.targets.iter().map(|t| t.horizon).max().unwrap_or(0);
    let samples = window_count(raw.rows(), opts.lag, max_h);
    let test = match opts.test {
        Some(t) => t,
        None => samples.saturating_sub(opts.train + opts.val),
    };
    let split = SplitCounts {
        train: opts.train,
        val: opts.val,
        test,
    };
    if split.train == 0 || split.total() > samples {
        return Err(FateError::contract(format!(
            "split {}+{}+{} does not fit {samples} samples",
            split.train, split.val, split.test
        )));
    }
    // rows read by the training samples, inputs and targets alike
    let train_rows = split.train + opts.lag + max_h - 1;
    let scaler = Scaler::fit(&raw, 0..train_rows)?;
    let mut dataset = window(&scaler.apply(&raw)?, opts.lag, &opts.targets)?;
    dataset.target_scaling = opts.targets.iter().map(|t| scaler.get(&t.feature)).collect();

    let report = IngestReport {
        rows: raw.rows(),
        stations: raw.stations.clone(),
        features: raw.features.clone(),
        rejected_rows: rejected,
        inserted_rows,
        imputed_total: imputed.iter().map(ImputeReport::total).sum(),
        imputed,
        degenerate_features: scaler.degenerate_features(),
        samples: dataset.len(),
        split,
    };
    Ok(PreparedData {
        dataset,
        split,
        scaler,
        report,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    start_row: usize,
    input_end: NaiveDateTime,
    target_times: Vec<NaiveDateTime>,
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    config_hash: Option<String>,
    lag: usize,
    stations: Vec<String>,
    features: Vec<String>,
    targets: Vec<TargetSpec>,
    target_scaling: Vec<Option<super::scale::ScalingParams>>,
    split: SplitCounts,
    scaler: Scaler,
    report: IngestReport,
    samples: Vec<SampleMeta>,
}

pub fn save_dataset(path: &Path, data: &PreparedData, config_hash: Option<&str>) -> Result<()> {
    let ds = &data.dataset;
    let header = CacheHeader {
        config_hash: config_hash.map(str::to_string),
        lag: ds.lag,
        stations: ds.stations.clone(),
        features: ds.features.clone(),
        targets: ds.targets.clone(),
        target_scaling: ds.target_scaling.clone(),
        split: data.split,
        scaler: data.scaler.clone(),
        report: data.report.clone(),
        samples: ds
            .samples
            .iter()
            .map(|s| SampleMeta {
                start_row: s.start_row,
                input_end: s.input_end,
                target_times: s.target_times.clone(),
            })
            .collect(),
    };
    let mut payload = Vec::new();
    for s in &ds.samples {
        payload.extend_from_slice(s.x.data());
        payload.extend_from_slice(&s.target);
    }
    format::write(path, DATASET_MAGIC, &header, &payload)
}

/// Reads a dataset cache; also returns the config hash it was written with.
pub fn load_dataset(path: &Path) -> Result<(PreparedData, Option<String>)> {
    let (h, payload): (CacheHeader, Vec<f64>) = format::read(path, DATASET_MAGIC)?;
    let shape = [h.lag, h.stations.len(), h.features.len()];
    let xlen = shape.iter().product::<usize>();
    let per = xlen + h.targets.len();
    if payload.len() != per * h.samples.len() {
        return Err(FateError::Format {
            path: path.to_path_buf(),
            reason: format!("payload has {} values, expected {}", payload.len(), per * h.samples.len()),
        });
    }
    let samples = h
        .samples
        .into_iter()
        .zip(payload.chunks_exact(per))
        .map(|(m, chunk)| {
            Ok(WindowedSample {
                x: Tensor::new(&shape, chunk[..xlen].to_vec())?,
                target: chunk[xlen..].to_vec(),
                start_row: m.start_row,
                input_end: m.input_end,
                target_times: m.target_times,
            })
        })
        .collect::<Result<_>>()?;
    Ok((
        PreparedData {
            dataset: WindowedDataset {
                lag: h.lag,
                stations: h.stations,
                features: h.features,
                targets: h.targets,
                target_scaling: h.target_scaling,
                samples,
            },
            split: h.split,
            scaler: h.scaler,
            report: h.report,
        },
        h.config_hash,
    ))
}
