use crate::error::{FateError, Result};

fn check(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(FateError::contract(format!(
            "length mismatch: {} predictions, {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(FateError::contract("metrics need at least one value"));
    }
    Ok(())
}

pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let s: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(s / pred.len() as f64)
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let s: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).abs()).sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(mse(&[2.0, 4.0], &[3.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mae(&[2.0, 4.0], &[3.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        let a = [0.3, -1.2, 4.0];
        let p = [0.1, 0.5, 3.0];
        let scaled: Vec<f64> = a.iter().zip(&p).map(|(a, p)| p + 3.0 * (a - p)).collect();
        assert!((mse(&p, &scaled).unwrap() - 9.0 * mse(&p, &a).unwrap()).abs() < 1e-12);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }
}
