use super::EncoderLayerWeights;
use crate::error::{FateError, Result};
use crate::tensor::{matmul, softmax, Tensor};

/// Classical scaled dot-product attention `softmax(QKᵀ/√H)·V` for a single
/// station, built from plain 2-D matrices. Returns `T×1×H`.
///
/// Reference for the tensorial path with time-axis normalization; with one
/// station the two must agree.
pub fn reduction_oracle(x: &Tensor, layer: &EncoderLayerWeights, head: usize) -> Result<Tensor> {
    if x.ndim() != 3 || x.shape()[1] != 1 {
        return Err(FateError::contract(format!(
            "reduction oracle needs a T×1×P input, got {:?}",
            x.shape()
        )));
    }
    if head >= layer.wq.len() {
        return Err(FateError::contract(format!("head {head} out of range")));
    }
    let (t, p) = (x.shape()[0], x.shape()[2]);
    let x2 = x.reshape(&[t, p])?;
    let q = matmul(&x2, &layer.wq[head].index0(0)?)?;
    let k = matmul(&x2, &layer.wk[head].index0(0)?)?;
    let v = matmul(&x2, &layer.wv[head].index0(0)?)?;
    let h = q.shape()[1];
    let scale = 1.0 / (h as f64).sqrt();
    let logits = matmul(&q, &k.permute(&[1, 0])?)?.map(|s| s * scale);
    let rows = (0..t)
        .map(|i| Ok(softmax(&logits.index0(i)?)?.into_data()))
        .collect::<Result<Vec<_>>>()?;
    let weights = Tensor::matrix(&rows)?;
    matmul(&weights, &v)?.reshape(&[t, 1, h])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FateWeights, ModelConfig};

    fn layer() -> EncoderLayerWeights {
        let cfg = ModelConfig {
            num_heads: 1,
            key_dim: 2,
            dense_units: 2,
            ..ModelConfig::new(3, 1, 2, 1)
        };
        FateWeights::init(&cfg, 3).unwrap().layers.remove(0)
    }

    #[test]
    fn rejects_multi_station_input() {
        let x = Tensor::zeros(&[3, 2, 2]).unwrap();
        assert!(matches!(reduction_oracle(&x, &layer(), 0), Err(FateError::Contract(_))));
    }

    #[test]
    fn zero_value_projection_gives_zero() {
        let mut l = layer();
        l.wv[0] = Tensor::zeros(&[1, 2, 2]).unwrap();
        let x = Tensor::new(&[3, 1, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let out = reduction_oracle(&x, &l, 0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_returns_value() {
        let l = layer();
        let x = Tensor::new(&[1, 1, 2], vec![0.3, -0.8]).unwrap();
        let out = reduction_oracle(&x, &l, 0).unwrap();
        let v = matmul(&x.reshape(&[1, 2]).unwrap(), &l.wv[0].index0(0).unwrap()).unwrap();
        assert_eq!(out.data(), v.data());
    }
}
