use serde::{Deserialize, Serialize};

use super::table::StationTable;
use crate::error::{FateError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub station: String,
    /// Filled cells per feature, in `feature_names` order.
    pub per_feature: Vec<usize>,
}

impl ImputeReport {
    pub fn total(&self) -> usize {
        self.per_feature.iter().sum()
    }
}

/// Linear interpolation between observed neighbours; edges copy the nearest
/// observation. Returns the filled column and how many cells were filled.
pub fn impute_column(values: &[Option<f64>]) -> Option<(Vec<f64>, usize)> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (observed.first()?, observed.last()?);
    let mut out = vec![0.0; values.len()];
    let mut filled = 0;
    for (i, v) in values.iter().enumerate() {
        out[i] = match v {
            Some(x) => *x,
            None => {
                filled += 1;
                if i < first {
                    values[first].unwrap()
                } else if i > last {
                    values[last].unwrap()
                } else {
                    let hi = observed.partition_point(|&j| j < i);
                    let (a, b) = (observed[hi - 1], observed[hi]);
                    let (ya, yb) = (values[a].unwrap(), values[b].unwrap());
                    ya + (yb - ya) * (i - a) as f64 / (b - a) as f64
                }
            }
        };
    }
    Some((out, filled))
}

pub fn impute(table: &StationTable) -> Result<(StationTable, ImputeReport)> {
    let mut out = table.clone();
    let mut per_feature = Vec::with_capacity(table.columns.len());
    for (col, name) in out.columns.iter_mut().zip(&table.feature_names) {
        let (dense, filled) = impute_column(col).ok_or_else(|| {
            FateError::contract(format!("station {}: feature {name} is entirely missing", table.station))
        })?;
        *col = dense.into_iter().map(Some).collect();
        per_feature.push(filled);
    }
    Ok((
        out,
        ImputeReport {
            station: table.station.clone(),
            per_feature,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_and_edge_gaps() {
        assert_eq!(impute_column(&[Some(1.0), None, Some(3.0)]), Some((vec![1.0, 2.0, 3.0], 1)));
        assert_eq!(impute_column(&[None, Some(5.0), Some(6.0)]), Some((vec![5.0, 5.0, 6.0], 1)));
        assert_eq!(impute_column(&[Some(5.0), Some(6.0), None, None]), Some((vec![5.0, 6.0, 6.0, 6.0], 2)));
        assert_eq!(
            impute_column(&[Some(0.0), None, None, Some(3.0)]),
            Some((vec![0.0, 1.0, 2.0, 3.0], 2))
        );
        assert_eq!(impute_column(&[Some(4.0), Some(2.0)]), Some((vec![4.0, 2.0], 0)));
        assert_eq!(impute_column(&[None, None]), None);
    }

    #[test]
    fn all_missing_feature_is_contract_error() {
        let t = StationTable {
            station: "A".into(),
            latitude: None,
            longitude: None,
            timestamps: vec![],
            feature_names: vec!["t".into(), "h".into()],
            columns: vec![vec![Some(1.0), None], vec![None, None]],
        };
        let err = impute(&t).unwrap_err();
        assert_eq!(err.code(), "E_CONTRACT");
        assert!(err.to_string().contains('h'));
    }
}
