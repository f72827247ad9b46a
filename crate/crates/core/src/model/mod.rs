//! The FATE encoder: positional encoding, tensorial focal modulation with
//! station-specific projections, residual + layer norm, feed-forward block
//! and a flat affine output head.

mod checkpoint;
mod encoder;
mod oracle;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoder::{
    apply_attention, attention_weights, build_forward, encoder_forward, encoder_forward_batch,
    merge_heads, positional_encoding, predict_batch, project_qkv, raw_scores, ForwardVars,
    HeadModulation, HeadVars, LayerTrace, LayerVars, ModulationTensors, RawScores, WeightVars,
};
pub use oracle::reduction_oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FateError, Result};
use crate::tensor::Tensor;

/// Axis along which raw scores are normalized into attention weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxAxis {
    /// Over the station axis for each (t, t') pair.
    #[default]
    Stations,
    /// Over the key time axis t' for each (t, s), as in standard attention.
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lag: usize,
    pub stations: usize,
    pub params: usize,
    pub n_targets: usize,
    pub num_heads: usize,
    pub key_dim: usize,
    pub dense_units: usize,
    pub num_layers: usize,
    /// Echoed into checkpoints; the forward pass never reads it.
    pub focal_levels: usize,
    pub softmax_axis: SoftmaxAxis,
    pub norm_eps: f64,
}

impl ModelConfig {
    /// Dimensions from the data, hyper-parameters at their defaults
    /// (8 heads, key dim 32, 64 dense units, one layer, 4 focal levels).
    pub fn new(lag: usize, stations: usize, params: usize, n_targets: usize) -> Self {
        ModelConfig {
            lag,
            stations,
            params,
            n_targets,
            num_heads: 8,
            key_dim: 32,
            dense_units: 64,
            num_layers: 1,
            focal_levels: 4,
            softmax_axis: SoftmaxAxis::Stations,
            norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("lag", self.lag),
            ("stations", self.stations),
            ("params", self.params),
            ("n_targets", self.n_targets),
            ("num_heads", self.num_heads),
            ("key_dim", self.key_dim),
            ("dense_units", self.dense_units),
            ("num_layers", self.num_layers),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(FateError::contract(format!("model.{name} must be >= 1")));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return Err(FateError::contract("model.norm_eps must be positive"));
        }
        Ok(())
    }

    /// Width fed to the warmup learning-rate schedule.
    pub fn d_model(&self) -> usize {
        self.dense_units
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.lag, self.stations, self.params]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayerWeights {
    /// Per head, `S×P×H`.
    pub wq: Vec<Tensor>,
    pub wk: Vec<Tensor>,
    pub wv: Vec<Tensor>,
    /// `heads×H×P`.
    pub wo: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub norm1_gamma: Tensor,
    pub norm1_beta: Tensor,
    pub norm2_gamma: Tensor,
    pub norm2_beta: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FateWeights {
    pub layers: Vec<EncoderLayerWeights>,
    /// `(T·S·P)×n_targets`.
    pub w_out: Tensor,
    pub b_out: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
}

impl EncoderLayerWeights {
    fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (s, p, h, d) = (cfg.stations, cfg.params, cfg.key_dim, cfg.dense_units);
        let mut proj = || -> Result<Vec<Tensor>> {
            (0..cfg.num_heads).map(|_| uniform(rng, &[s, p, h], p)).collect()
        };
        let (wq, wk, wv) = (proj()?, proj()?, proj()?);
        Ok(EncoderLayerWeights {
            wq,
            wk,
            wv,
            wo: uniform(rng, &[cfg.num_heads, h, p], cfg.num_heads * h)?,
            w1: uniform(rng, &[p, d], p)?,
            b1: Tensor::zeros(&[d])?,
            w2: uniform(rng, &[d, p], d)?,
            b2: Tensor::zeros(&[p])?,
            norm1_gamma: Tensor::ones(&[p])?,
            norm1_beta: Tensor::zeros(&[p])?,
            norm2_gamma: Tensor::ones(&[p])?,
            norm2_beta: Tensor::zeros(&[p])?,
        })
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = Vec::new();
        for h in 0..self.wq.len() {
            v.extend([&self.wq[h], &self.wk[h], &self.wv[h]]);
        }
        v.extend([
            &self.wo,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.norm1_gamma,
            &self.norm1_beta,
            &self.norm2_gamma,
            &self.norm2_beta,
        ]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        for ((q, k), val) in self.wq.iter_mut().zip(&mut self.wk).zip(&mut self.wv) {
            v.extend([q, k, val]);
        }
        v.extend([
            &mut self.wo,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.norm1_gamma,
            &mut self.norm1_beta,
            &mut self.norm2_gamma,
            &mut self.norm2_beta,
        ]);
        v
    }

    fn names(prefix: &str, heads: usize) -> Vec<String> {
        let mut v = Vec::new();
        for h in 0..heads {
            for w in ["wq", "wk", "wv"] {
                v.push(format!("{prefix}.head{h}.{w}"));
            }
        }
        for w in [
            "wo",
            "ffn.w1",
            "ffn.b1",
            "ffn.w2",
            "ffn.b2",
            "norm1.gamma",
            "norm1.beta",
            "norm2.gamma",
            "norm2.beta",
        ] {
            v.push(format!("{prefix}.{w}"));
        }
        v
    }
}

impl FateWeights {
    /// Seeded uniform init in ±1/√fan_in; biases and betas zero, gammas one.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..cfg.num_layers)
            .map(|_| EncoderLayerWeights::init(cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let flat = cfg.lag * cfg.stations * cfg.params;
        Ok(FateWeights {
            layers,
            w_out: uniform(&mut rng, &[flat, cfg.n_targets], flat)?,
            b_out: Tensor::zeros(&[cfg.n_targets])?,
        })
    }

    /// Every learnable tensor in a fixed canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        v.extend([&self.w_out, &self.b_out]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        v.extend([&mut self.w_out, &mut self.b_out]);
        v
    }

    /// Names aligned with [`FateWeights::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| EncoderLayerWeights::names(&format!("layer{i}"), l.wq.len()))
            .collect();
        v.extend(["out.w".to_string(), "out.b".to_string()]);
        v
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        self.names().into_iter().zip(self.tensors()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Same structure, every tensor replaced by `tensors` in canonical order.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(FateError::contract(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(FateError::shape("with_tensors", slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(out)
    }

    /// Checks every tensor shape against `cfg` and that all values are finite.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = FateWeights::init(cfg, 0)?;
        let (mine, theirs) = (self.named(), reference.named());
        if mine.len() != theirs.len() {
            return Err(FateError::contract(format!(
                "weights hold {} tensors, config implies {}",
                mine.len(),
                theirs.len()
            )));
        }
        for ((name, t), (_, r)) in mine.iter().zip(&theirs) {
            if t.shape() != r.shape() {
                return Err(FateError::shape("weights", t.shape(), r.shape()));
            }
            if !t.is_finite() {
                return Err(FateError::numeric(format!("weight {name}")));
            }
        }
        Ok(())
    }
}
