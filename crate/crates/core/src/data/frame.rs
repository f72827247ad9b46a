use std::ops::Range;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::features::{add_temporal_features, to_cartesian, Cadence, CARTESIAN};
use super::scale::ScalingParams;
use super::table::{time_step, StationTable};
use crate::error::{FateError, Result};

/// Dense `rows × stations × features` block sharing one time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub timestamps: Vec<NaiveDateTime>,
    pub stations: Vec<String>,
    pub features: Vec<String>,
    values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub cartesian: bool,
    pub temporal: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            cartesian: true,
            temporal: true,
        }
    }
}

impl FeatureFrame {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        stations: Vec<String>,
        features: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != timestamps.len() * stations.len() * features.len() {
            return Err(FateError::contract(format!(
                "frame has {} values, expected {}×{}×{}",
                values.len(),
                timestamps.len(),
                stations.len(),
                features.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FateError::contract("timestamps must be strictly increasing"));
        }
        Ok(Self {
            timestamps,
            stations,
            features,
            values,
        })
    }

    /// Joins imputed station tables, optionally appending coordinate and
    /// calendar features. Every table must share timestamps and columns.
    pub fn assemble(tables: &[StationTable], options: FeatureOptions) -> Result<Self> {
        let first = tables.first().ok_or_else(|| FateError::contract("no station tables"))?;
        for t in tables {
            if t.timestamps != first.timestamps {
                return Err(FateError::contract(format!(
                    "station {} does not share the time axis of {}",
                    t.station, first.station
                )));
            }
            if t.feature_names != first.feature_names {
                return Err(FateError::contract(format!(
                    "station {} has columns {:?}, expected {:?}",
                    t.station, t.feature_names, first.feature_names
                )));
            }
        }
        let rows = first.len();
        let mut features = first.feature_names.clone();
        let temporal = if options.temporal {
            add_temporal_features(&first.timestamps, Cadence::from_step(time_step(&first.timestamps)?))
        } else {
            Vec::new()
        };
        if options.cartesian {
            let missing: Vec<String> = tables
                .iter()
                .filter(|t| t.latitude.is_none() || t.longitude.is_none())
                .map(|t| t.station.clone())
                .collect();
            if !missing.is_empty() {
                return Err(FateError::MissingCoords(missing));
            }
            features.extend(CARTESIAN.iter().map(|s| s.to_string()));
        }
        features.extend(temporal.iter().map(|(n, _)| n.clone()));

        let per_station: Vec<Vec<Vec<f64>>> = tables
            .iter()
            .map(|t| {
                let mut cols = t.dense_columns()?;
                if options.cartesian {
                    let (x, y, z) = to_cartesian(t.latitude.unwrap(), t.longitude.unwrap())?;
                    cols.extend([vec![x; rows], vec![y; rows], vec![z; rows]]);
                }
                cols.extend(temporal.iter().map(|(_, c)| c.clone()));
                Ok(cols)
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(rows * tables.len() * features.len());
        for r in 0..rows {
            for cols in &per_station {
                values.extend(cols.iter().map(|c| c[r]));
            }
        }
        Self::new(
            first.timestamps.clone(),
            tables.iter().map(|t| t.station.clone()).collect(),
            features,
            values,
        )
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, station: usize, feature: usize) -> f64 {
        self.values[(row * self.stations.len() + station) * self.features.len() + feature]
    }

    pub fn station_index(&self, name: &str) -> Result<usize> {
        self.stations
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| FateError::contract(format!("unknown station {name:?}")))
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| FateError::contract(format!("unknown feature {name:?}")))
    }

    /// Values of one feature pooled across stations over a row range.
    pub fn pooled(&self, feature: usize, rows: Range<usize>) -> Vec<f64> {
        rows.flat_map(|r| (0..self.stations.len()).map(move |s| (r, s)))
            .map(|(r, s)| self.get(r, s, feature))
            .collect()
    }

    /// Contiguous `rows × stations × features` slice starting at `start`.
    pub fn block(&self, start: usize, len: usize) -> &[f64] {
        let stride = self.stations.len() * self.features.len();
        &self.values[start * stride..(start + len) * stride]
    }
}

/// Per-feature min-max parameters, fitted on a row range and pooled over stations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<String>,
    pub params: Vec<ScalingParams>,
}

impl Scaler {
    pub fn fit(frame: &FeatureFrame, rows: Range<usize>) -> Result<Self> {
        if rows.is_empty() || rows.end > frame.rows() {
            return Err(FateError::contract(format!(
                "scaling rows {rows:?} invalid for {} rows",
                frame.rows()
            )));
        }
        let params = (0..frame.features.len())
            .map(|f| {
                let p = ScalingParams::fit(&frame.pooled(f, rows.clone()))?;
                if p.is_degenerate() {
                    log::warn!("feature {} is constant on the training rows; scaled to 0", frame.features[f]);
                }
                Ok(p)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            features: frame.features.clone(),
            params,
        })
    }

    pub fn degenerate_features(&self) -> Vec<String> {
        self.features
            .iter()
            .zip(&self.params)
            .filter(|(_, p)| p.is_degenerate())
            .map(|(f, _)| f.clone())
            .collect()
    }

    pub fn get(&self, feature: &str) -> Option<ScalingParams> {
        self.features.iter().position(|f| f == feature).map(|i| self.params[i])
    }

    pub fn apply(&self, frame: &FeatureFrame) -> Result<FeatureFrame> {
        if frame.features != self.features {
            return Err(FateError::contract("scaler features do not match the frame"));
        }
        let p = self.features.len();
        let values = frame
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.params[i % p].apply(v))
            .collect();
        FeatureFrame::new(frame.timestamps.clone(), frame.stations.clone(), frame.features.clone(), values)
    }
}
