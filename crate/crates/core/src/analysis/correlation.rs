use serde::{Deserialize, Serialize};

use crate::error::{FateError, Result};

fn centered_sums(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).fold((0.0, 0.0, 0.0), |(ab, aa, bb), (x, y)| {
        let (dx, dy) = (x - ma, y - mb);
        (ab + dx * dy, aa + dx * dx, bb + dy * dy)
    })
}

/// Pearson correlation coefficient, clamped to [−1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FateError::contract(format!("pearson: lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(FateError::contract("pearson needs at least 2 observations"));
    }
    let (ab, aa, bb) = centered_sums(a, b);
    let mut constant = Vec::new();
    if aa == 0.0 {
        constant.push("a".to_string());
    }
    if bb == 0.0 {
        constant.push("b".to_string());
    }
    if !constant.is_empty() {
        return Err(FateError::Degenerate(constant));
    }
    Ok((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major; `NaN` where a pair involves a constant column.
    pub values: Vec<Vec<f64>>,
    pub degenerate: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Square table with labels on both axes; undefined entries are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter");
        for l in &self.labels {
            s.push(',');
            s.push_str(&csv_field(l));
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            s.push_str(&csv_field(l));
            for v in row {
                s.push(',');
                if v.is_finite() {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pairwise Pearson matrix. Constant columns get `NaN` rows and columns
/// and are listed in `degenerate`; it is an error only when no pair is defined.
pub fn correlation_matrix_lenient(labels: &[String], columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    if labels.len() != columns.len() {
        return Err(FateError::contract("one label per column required"));
    }
    if columns.len() < 2 {
        return Err(FateError::contract("correlation needs at least 2 columns"));
    }
    let n = columns[0].len();
    if let Some(i) = columns.iter().position(|c| c.len() != n) {
        return Err(FateError::contract(format!("column {} has {} rows, expected {n}", labels[i], columns[i].len())));
    }
    let degenerate: Vec<String> = columns
        .iter()
        .zip(labels)
        .filter(|(c, _)| pearson(c, c).is_err())
        .map(|(_, l)| l.clone())
        .collect();
    let k = columns.len();
    if k - degenerate.len() < 2 && n >= 2 {
        return Err(FateError::Degenerate(degenerate));
    }
    let mut values = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        if degenerate.contains(&labels[i]) {
            continue;
        }
        values[i][i] = 1.0;
        for j in 0..i {
            if degenerate.contains(&labels[j]) {
                continue;
            }
            let r = pearson(&columns[i], &columns[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: labels.to_vec(),
        values,
        degenerate,
    })
}

/// As [`correlation_matrix_lenient`] but any constant column is an error.
pub fn correlation_matrix(labels: &[String], columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let m = correlation_matrix_lenient(labels, columns)?;
    if !m.degenerate.is_empty() {
        return Err(FateError::Degenerate(m.degenerate));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        let err = pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap_err();
        assert_eq!(err.code(), "E_DEGENERATE");
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn lenient_matrix_marks_constant_columns() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let cols = vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0], vec![3.0, 1.0, 2.0]];
        let m = correlation_matrix_lenient(&labels, &cols).unwrap();
        assert_eq!(m.degenerate, vec!["b"]);
        assert!(m.get(0, 1).is_nan());
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.get(0, 2), m.get(2, 0));
        assert!(correlation_matrix(&labels, &cols).is_err());
        let csv = m.to_csv();
        assert!(csv.starts_with("parameter,a,b,c\n"));
        assert!(csv.contains("\nb,,,\n"));
        let cols = vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0], vec![1.0, 1.0, 1.0]];
        assert_eq!(correlation_matrix_lenient(&labels, &cols).unwrap_err().code(), "E_DEGENERATE");
    }
}
