#![allow(dead_code)]

use chrono::{NaiveDateTime, TimeDelta};
use fate_core::data::{window, FeatureFrame, ScalingParams, TargetSpec, WindowedDataset};
use fate_core::model::ModelConfig;
use fate_core::train::{LrMode, TrainConfig};

pub fn start_time() -> NaiveDateTime {
    fate_core::data::parse_timestamp("2012-10-01 12:00:00").unwrap()
}

/// Deterministic 2-station, 3-parameter sinusoid with values in [0, 1].
pub fn sinusoid_frame(rows: usize) -> FeatureFrame {
    let (s, p) = (2, 3);
    let mut values = Vec::with_capacity(rows * s * p);
    for t in 0..rows {
        for st in 0..s {
            for f in 0..p {
                let phase = 0.9 * st as f64 + 2.1 * f as f64;
                let period = 12.0 + 5.0 * f as f64;
                values.push(0.5 + 0.45 * (std::f64::consts::TAU * t as f64 / period + phase).sin());
            }
        }
    }
    FeatureFrame::new(
        (0..rows).map(|i| start_time() + TimeDelta::hours(i as i64)).collect(),
        vec!["north".into(), "south".into()],
        vec!["temperature".into(), "humidity".into(), "pressure".into()],
        values,
    )
    .unwrap()
}

/// 64 windows with T=8, Δ=1, predicting station 0 temperature.
pub fn overfit_dataset() -> WindowedDataset {
    let frame = sinusoid_frame(64 + 8);
    let mut ds = window(
        &frame,
        8,
        &[TargetSpec {
            station: "north".into(),
            feature: "temperature".into(),
            horizon: 1,
        }],
    )
    .unwrap();
    ds.target_scaling = vec![Some(ScalingParams { min: 0.0, max: 1.0 })];
    assert_eq!(ds.len(), 64);
    ds
}

pub fn overfit_model() -> ModelConfig {
    let mut cfg = ModelConfig::new(8, 2, 3, 1);
    cfg.num_heads = 2;
    cfg.key_dim = 8;
    cfg.dense_units = 32;
    cfg
}

pub fn overfit_train_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 500,
        batch_size: 16,
        patience: 500,
        warmup_steps: 100,
        seed: 7,
        lr_mode: LrMode::Schedule,
        max_steps: Some(2000),
    }
}
