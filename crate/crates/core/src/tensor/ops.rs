use super::{kernels, Tensor};
use crate::error::{FateError, Result};

/// Matrix product of an `m×k` and a `k×n` matrix.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(FateError::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    kernels::matmul_acc(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Max-subtracted softmax of a vector.
pub fn softmax(v: &Tensor) -> Result<Tensor> {
    if v.ndim() != 1 {
        return Err(FateError::shape("softmax", v.shape(), &[]));
    }
    Ok(Tensor::from_parts(
        v.shape().to_vec(),
        kernels::softmax_axis(v.data(), v.shape(), 0),
    ))
}

/// `gamma ⊙ (x − μ)/√(σ² + eps) + beta` over a single vector.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    if x.ndim() != 1 || gamma.shape() != x.shape() || beta.shape() != x.shape() {
        return Err(FateError::shape("layer_norm", x.shape(), gamma.shape()));
    }
    if eps <= 0.0 {
        return Err(FateError::contract("layer_norm eps must be positive"));
    }
    let (y, _, _) = kernels::layer_norm(x.data(), gamma.data(), beta.data(), x.len(), eps);
    Ok(Tensor::from_parts(x.shape().to_vec(), y))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let m = Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::eye(2).unwrap(), &m).unwrap(), m);
        let a = Tensor::matrix(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::matrix(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let c = matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a.get(&[i, p]).unwrap() * b.get(&[p, j]).unwrap();
                }
                assert!((c.get(&[i, j]).unwrap() - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        let b = Tensor::zeros(&[2, 3]).unwrap();
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (m, k, l, n) = (
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
            );
            let a = random(&mut rng, &[m, k]);
            let b = random(&mut rng, &[k, l]);
            let c = random(&mut rng, &[l, n]);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&Tensor::vector(vec![0.0; 3]).unwrap()).unwrap();
        u.data().iter().for_each(|v| assert!((v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(softmax(&Tensor::vector(vec![-7.5]).unwrap()).unwrap().data(), &[1.0]);
        let big = softmax(&Tensor::vector(vec![1000.0, 1000.0]).unwrap()).unwrap();
        assert_eq!(big.data(), &[0.5, 0.5]);
        assert!(softmax(&Tensor::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..10);
            let v = random(&mut rng, &[n]).map(|x| 20.0 * x);
            let c = rng.gen_range(-50.0..50.0);
            let s = softmax(&v).unwrap();
            let shifted = softmax(&v.map(|x| x + c)).unwrap();
            assert!((s.sum() - 1.0).abs() < 1e-12);
            assert!(s.data().iter().all(|&p| p > 0.0));
            for (a, b) in s.data().iter().zip(shifted.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_examples() {
        let g = Tensor::ones(&[3]).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        let flat = layer_norm(&Tensor::full(&[3], 4.2).unwrap(), &g, &b, 1e-5).unwrap();
        assert!(flat.data().iter().all(|&v| v == 0.0));

        let g2 = Tensor::ones(&[2]).unwrap();
        let b2 = Tensor::zeros(&[2]).unwrap();
        let y = layer_norm(&Tensor::vector(vec![-1.0, 1.0]).unwrap(), &g2, &b2, 1e-15).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-12 && (y.data()[1] - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, &[17]);
        let y = layer_norm(&x, &Tensor::ones(&[17]).unwrap(), &Tensor::zeros(&[17]).unwrap(), 1e-5)
            .unwrap();
        assert!((y.sum() / 17.0).abs() < 1e-12);
        assert!(layer_norm(&x, &g, &b, 1e-5).is_err());
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::vector(vec![-3.0, -0.5]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        assert_eq!(relu(&relu(&x)), relu(&x));
    }
}
