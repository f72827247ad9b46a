use serde::{Deserialize, Serialize};

use crate::error::{FateError, Result};

/// Min-max parameters for one feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: f64,
    pub max: f64,
}

impl ScalingParams {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(FateError::contract("cannot fit scaling on no values"));
        }
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !min.is_finite() || !max.is_finite() {
            return Err(FateError::numeric("scaling fit"));
        }
        Ok(Self { min, max })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Constant columns map to 0.
    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

pub fn fit_scale(train: &[f64]) -> Result<ScalingParams> {
    ScalingParams::fit(train)
}

pub fn apply_scale(rows: &[f64], params: &ScalingParams) -> Vec<f64> {
    rows.iter().map(|&x| params.apply(x)).collect()
}

pub fn invert_scale(value: f64, params: &ScalingParams) -> f64 {
    params.invert(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_examples() {
        let p = fit_scale(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(apply_scale(&[0.0, 5.0, 10.0], &p), vec![0.0, 0.5, 1.0]);
        assert_eq!(apply_scale(&[20.0], &p), vec![2.0]);
        let c = fit_scale(&[7.0, 7.0, 7.0]).unwrap();
        assert!(c.is_degenerate());
        assert_eq!(apply_scale(&[7.0, 7.0, 7.0], &c), vec![0.0; 3]);
        assert!(fit_scale(&[]).is_err());
    }
}
