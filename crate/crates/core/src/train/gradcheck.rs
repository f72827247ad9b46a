use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{build_forward, FateWeights, ModelConfig, SoftmaxAxis, WeightVars};
use crate::tensor::{finite_diff_grad, max_relative_error, BackwardFault, Graph, Tensor};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub worst: String,
    pub passed: bool,
}

/// The reference instance: T=4, S=3, P=5, H=2, two heads, two samples.
pub fn gradcheck_config(axis: SoftmaxAxis) -> ModelConfig {
    let mut cfg = ModelConfig::new(4, 3, 5, 2);
    cfg.num_heads = 2;
    cfg.key_dim = 2;
    cfg.dense_units = 8;
    cfg.softmax_axis = axis;
    cfg
}

fn loss(
    weights: &FateWeights,
    x: &Tensor,
    y: &Tensor,
    cfg: &ModelConfig,
    fault: Option<BackwardFault>,
    differentiate: bool,
) -> Result<(f64, Vec<Tensor>, Option<Tensor>)> {
    let mut g = Graph::new();
    if let Some(f) = fault {
        g.inject_fault(f);
    }
    let wv = WeightVars::register(&mut g, weights, differentiate);
    let xv = if differentiate { g.param(x.clone()) } else { g.constant(x.clone()) };
    let fwd = build_forward(&mut g, xv, &wv, cfg)?;
    let yv = g.constant(y.clone());
    let d = g.sub(fwd.prediction, yv)?;
    let sq = g.mul(d, d)?;
    let l = g.mean(sq);
    let value = g.value(l).item()?;
    if !differentiate {
        return Ok((value, vec![], None));
    }
    g.backward(l)?;
    Ok((value, wv.gradients(&g), g.grad_tensor(xv)))
}

/// MSE-loss gradients of every weight tensor and of the input against
/// central differences on a random instance drawn from `seed`.
pub fn gradient_check(cfg: &ModelConfig, seed: u64, fault: Option<BackwardFault>) -> Result<GradcheckReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = FateWeights::init(cfg, rng.gen())?;
    let mut shape = vec![2];
    shape.extend(cfg.input_shape());
    let n: usize = shape.iter().product();
    let x = Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let y = Tensor::new(&[2, cfg.n_targets], (0..2 * cfg.n_targets).map(|_| rng.gen_range(-1.0..1.0)).collect())?;

    let (_, grads, xgrad) = loss(&weights, &x, &y, cfg, fault, true)?;
    let mut tensors = Vec::new();
    let names = weights.names();
    for (i, name) in names.iter().enumerate() {
        let numeric = finite_diff_grad(
            |t| {
                let mut tensors: Vec<Tensor> = weights.tensors().into_iter().cloned().collect();
                tensors[i] = t.clone();
                let w = weights.with_tensors(tensors).expect("same shapes");
                loss(&w, &x, &y, cfg, None, false).expect("forward").0
            },
            weights.tensors()[i],
            GRADCHECK_EPS,
        );
        tensors.push(TensorCheck {
            name: name.clone(),
            max_rel_error: max_relative_error(grads[i].data(), numeric.data()),
        });
    }
    let numeric = finite_diff_grad(
        |t| loss(&weights, t, &y, cfg, None, false).expect("forward").0,
        &x,
        GRADCHECK_EPS,
    );
    let xgrad = xgrad.unwrap_or_else(|| Tensor::zeros(&shape).expect("positive shape"));
    tensors.push(TensorCheck {
        name: "input".into(),
        max_rel_error: max_relative_error(xgrad.data(), numeric.data()),
    });
    let worst = tensors
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("nonempty");
    Ok(GradcheckReport {
        seed,
        max_rel_error: worst.max_rel_error,
        worst: worst.name.clone(),
        passed: worst.max_rel_error < GRADCHECK_TOLERANCE,
        tensors,
    })
}
