use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike};

use crate::error::{FateError, Result};

pub const DAY_OF_YEAR: &str = "day_of_year";
pub const HOUR_OF_DAY: &str = "hour_of_day";
pub const CARTESIAN: [&str; 3] = ["coord_x", "coord_y", "coord_z"];

/// Unit-sphere position of a latitude/longitude pair given in degrees.
pub fn to_cartesian(lat: f64, lon: f64) -> Result<(f64, f64, f64)> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(FateError::contract(format!("coordinates out of range: lat {lat}, lon {lon}")));
    }
    let (phi, lambda) = (lat.to_radians(), lon.to_radians());
    Ok((phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cadence {
    SubDaily,
    Daily,
}

impl Cadence {
    pub fn from_step(step: TimeDelta) -> Self {
        if step < TimeDelta::days(1) {
            Cadence::SubDaily
        } else {
            Cadence::Daily
        }
    }
}

/// Day-of-year (1..=366) and, for sub-daily series, hour-of-day columns.
pub fn add_temporal_features(timestamps: &[NaiveDateTime], cadence: Cadence) -> Vec<(String, Vec<f64>)> {
    let mut cols = vec![(
        DAY_OF_YEAR.to_string(),
        timestamps.iter().map(|t| t.ordinal() as f64).collect(),
    )];
    if cadence == Cadence::SubDaily {
        cols.push((
            HOUR_OF_DAY.to_string(),
            timestamps.iter().map(|t| t.hour() as f64).collect(),
        ));
    }
    cols
}
