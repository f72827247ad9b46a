use super::{EncoderLayerWeights, FateWeights, ModelConfig, SoftmaxAxis};
use crate::error::{FateError, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Sinusoidal encoding over (time, parameter), repeated along stations.
///
/// `PE(pos, 2i) = sin(pos / 10000^(2i/P))`, `PE(pos, 2i+1) = cos(…)`.
pub fn positional_encoding(lag: usize, stations: usize, params: usize) -> Result<Tensor> {
    let mut row = Vec::with_capacity(lag * params);
    for pos in 0..lag {
        for j in 0..params {
            let pair = (2 * (j / 2)) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / params as f64);
            row.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    let mut data = Vec::with_capacity(lag * stations * params);
    for pos in 0..lag {
        for _ in 0..stations {
            data.extend_from_slice(&row[pos * params..(pos + 1) * params]);
        }
    }
    Tensor::new(&[lag, stations, params], data)
}

/// Graph handles for every learnable tensor, mirroring [`FateWeights`].
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub wq: Vec<Var>,
    pub wk: Vec<Var>,
    pub wv: Vec<Var>,
    pub wo: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub norm1_gamma: Var,
    pub norm1_beta: Var,
    pub norm2_gamma: Var,
    pub norm2_beta: Var,
}

#[derive(Clone, Debug)]
pub struct WeightVars {
    pub layers: Vec<LayerVars>,
    pub w_out: Var,
    pub b_out: Var,
    all: Vec<Var>,
}

impl WeightVars {
    /// Records the weights as graph leaves, differentiable iff `trainable`.
    pub fn register(g: &mut Graph, weights: &FateWeights, trainable: bool) -> Self {
        let all: Vec<Var> = weights
            .tensors()
            .into_iter()
            .map(|t| {
                let t = t.clone();
                if trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect();
        let mut it = all.iter().copied();
        let mut next = || it.next().expect("canonical tensor order");
        let layers = weights
            .layers
            .iter()
            .map(|l| {
                let heads = l.wq.len();
                let (mut wq, mut wk, mut wv) = (vec![], vec![], vec![]);
                for _ in 0..heads {
                    wq.push(next());
                    wk.push(next());
                    wv.push(next());
                }
                LayerVars {
                    wq,
                    wk,
                    wv,
                    wo: next(),
                    w1: next(),
                    b1: next(),
                    w2: next(),
                    b2: next(),
                    norm1_gamma: next(),
                    norm1_beta: next(),
                    norm2_gamma: next(),
                    norm2_beta: next(),
                }
            })
            .collect();
        let w_out = next();
        let b_out = next();
        WeightVars {
            layers,
            w_out,
            b_out,
            all,
        }
    }

    /// Handles in canonical [`FateWeights::tensors`] order.
    pub fn all(&self) -> &[Var] {
        &self.all
    }

    /// Gradients in canonical order; zeros where nothing flowed.
    pub fn gradients(&self, g: &Graph) -> Vec<Tensor> {
        self.all
            .iter()
            .map(|&v| {
                g.grad_tensor(v).unwrap_or_else(|| {
                    let shape = g.shape(v).to_vec();
                    Tensor::zeros(&shape).expect("weight shapes are positive")
                })
            })
            .collect()
    }
}

/// Graph nodes of one head's modulation, batched with a leading B axis.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    /// `B×T×S×H`
    pub q: Var,
    pub k: Var,
    pub v: Var,
    /// `B×T×S×T×S` (query time, query station, key time, key station)
    pub rtilde: Var,
    /// `B×T×T×S`
    pub r: Var,
    pub atilde: Var,
    /// `B×T×S×H`
    pub a: Var,
}

#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub heads: Vec<HeadVars>,
    /// merged heads, `B×T×S×P`
    pub y: Var,
    pub output: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// `B×n_targets`
    pub prediction: Var,
    pub layers: Vec<LayerTrace>,
}

fn finite(g: &Graph, v: Var, stage: impl FnOnce() -> String) -> Result<Var> {
    if g.value(v).is_finite() {
        Ok(v)
    } else {
        Err(FateError::numeric(stage()))
    }
}

fn dims4(g: &Graph, v: Var, op: &'static str) -> Result<[usize; 4]> {
    let s = g.shape(v);
    <[usize; 4]>::try_from(s).map_err(|_| FateError::shape(op, s, &[0; 4]))
}

/// `x: B×T×S×P`, `w: S×P×H` → `B×T×S×H`; each station uses its own `P×H` slice.
fn project(g: &mut Graph, x: Var, w: Var) -> Result<Var> {
    let [b, t, s, p] = dims4(g, x, "project_qkv")?;
    let ws = g.shape(w);
    if ws.len() != 3 || ws[0] != s || ws[1] != p {
        return Err(FateError::shape("project_qkv", &[b, t, s, p], ws));
    }
    let h = ws[2];
    let xs = g.permute(x, &[2, 0, 1, 3])?;
    let xs = g.reshape(xs, &[s, b * t, p])?;
    let out = g.batch_matmul(xs, w)?;
    let out = g.reshape(out, &[s, b, t, h])?;
    g.permute(out, &[1, 2, 0, 3])
}

/// Returns (`R̃: B×T×S×T×S`, `R: B×T×T×S`).
fn scores(g: &mut Graph, q: Var, k: Var) -> Result<(Var, Var)> {
    let [b, t, s, h] = dims4(g, q, "raw_scores")?;
    if g.shape(k) != g.shape(q) {
        return Err(FateError::shape("raw_scores", g.shape(q), g.shape(k)));
    }
    let qf = g.reshape(q, &[b, t * s, h])?;
    let kf = g.reshape(k, &[b, t * s, h])?;
    let kt = g.permute(kf, &[0, 2, 1])?;
    let pairs = g.batch_matmul(qf, kt)?;
    let rtilde = g.reshape(pairs, &[b, t, s, t, s])?;
    let summed = g.sum_axis(rtilde, 4)?;
    let summed = g.permute(summed, &[0, 1, 3, 2])?;
    let r = g.scale(summed, 1.0 / (h as f64).sqrt());
    Ok((rtilde, r))
}

fn normalize(g: &mut Graph, r: Var, axis: SoftmaxAxis) -> Result<Var> {
    dims4(g, r, "attention_weights")?;
    match axis {
        SoftmaxAxis::Stations => g.softmax(r, 3),
        SoftmaxAxis::Time => g.softmax(r, 2),
    }
}

/// `A[t,s,:] = Σ_t' Ã[t,t',s] · V[t',s,:]`
fn mix(g: &mut Graph, atilde: Var, v: Var) -> Result<Var> {
    let [b, t, t2, s] = dims4(g, atilde, "apply_attention")?;
    let [vb, vt, vs, h] = dims4(g, v, "apply_attention")?;
    if t != t2 || (vb, vt, vs) != (b, t, s) {
        return Err(FateError::shape("apply_attention", g.shape(atilde), g.shape(v)));
    }
    let at = g.permute(atilde, &[0, 3, 1, 2])?;
    let at = g.reshape(at, &[b * s, t, t])?;
    let vv = g.permute(v, &[0, 2, 1, 3])?;
    let vv = g.reshape(vv, &[b * s, t, h])?;
    let out = g.batch_matmul(at, vv)?;
    let out = g.reshape(out, &[b, s, t, h])?;
    g.permute(out, &[0, 2, 1, 3])
}

/// `Y[t,s,:] = Σ_h A_h[t,s,:] · WO[h]`
fn merge(g: &mut Graph, heads: &[Var], wo: Var) -> Result<Var> {
    let wos = g.shape(wo).to_vec();
    if wos.len() != 3 || wos[0] != heads.len() {
        return Err(FateError::contract(format!(
            "merge_heads got {} heads for output weights of shape {wos:?}",
            heads.len()
        )));
    }
    let mut acc: Option<Var> = None;
    let mut dims = [0; 4];
    for (i, &a) in heads.iter().enumerate() {
        dims = dims4(g, a, "merge_heads")?;
        let [b, t, s, h] = dims;
        if h != wos[1] {
            return Err(FateError::shape("merge_heads", g.shape(a), &wos));
        }
        let af = g.reshape(a, &[b * t * s, h])?;
        let w = g.index0(wo, i)?;
        let m = g.matmul(af, w)?;
        acc = Some(match acc {
            Some(prev) => g.add(prev, m)?,
            None => m,
        });
    }
    let [b, t, s, _] = dims;
    g.reshape(acc.expect("at least one head"), &[b, t, s, wos[2]])
}

fn encoder_layer(
    g: &mut Graph,
    x: Var,
    w: &LayerVars,
    cfg: &ModelConfig,
    layer: usize,
) -> Result<LayerTrace> {
    let [b, t, s, p] = dims4(g, x, "encoder_layer")?;
    let mut heads = Vec::with_capacity(w.wq.len());
    for h in 0..w.wq.len() {
        let tag = |what: &str| format!("layer{layer}.head{h}.{what}");
        let q = project(g, x, w.wq[h])?;
        let q = finite(g, q, || tag("query"))?;
        let k = project(g, x, w.wk[h])?;
        let k = finite(g, k, || tag("key"))?;
        let v = project(g, x, w.wv[h])?;
        let v = finite(g, v, || tag("value"))?;
        let (rtilde, r) = scores(g, q, k)?;
        let r = finite(g, r, || tag("scores"))?;
        let atilde = normalize(g, r, cfg.softmax_axis)?;
        let atilde = finite(g, atilde, || tag("attention"))?;
        let a = mix(g, atilde, v)?;
        heads.push(HeadVars {
            q,
            k,
            v,
            rtilde,
            r,
            atilde,
            a,
        });
    }
    let per_head: Vec<Var> = heads.iter().map(|hv| hv.a).collect();
    let y = merge(g, &per_head, w.wo)?;
    let y = finite(g, y, || format!("layer{layer}.merge"))?;
    let res = g.add(x, y)?;
    let ln1 = g.layer_norm(res, w.norm1_gamma, w.norm1_beta, cfg.norm_eps)?;
    let ln1 = finite(g, ln1, || format!("layer{layer}.norm1"))?;

    let f = g.reshape(ln1, &[b * t * s, p])?;
    let f = g.matmul(f, w.w1)?;
    let f = g.add_suffix(f, w.b1)?;
    let f = g.relu(f);
    let f = g.matmul(f, w.w2)?;
    let f = g.add_suffix(f, w.b2)?;
    let f = g.reshape(f, &[b, t, s, p])?;
    let f = finite(g, f, || format!("layer{layer}.ffn"))?;
    let res2 = g.add(ln1, f)?;
    let output = g.layer_norm(res2, w.norm2_gamma, w.norm2_beta, cfg.norm_eps)?;
    let output = finite(g, output, || format!("layer{layer}.norm2"))?;
    Ok(LayerTrace { heads, y, output })
}

/// Records the full encoder on a batch `x: B×T×S×P`.
pub fn build_forward(
    g: &mut Graph,
    x: Var,
    weights: &WeightVars,
    cfg: &ModelConfig,
) -> Result<ForwardVars> {
    let [b, t, s, p] = dims4(g, x, "encoder_forward")?;
    if [t, s, p] != cfg.input_shape() {
        return Err(FateError::shape("encoder_forward", g.shape(x), &cfg.input_shape()));
    }
    let pe = g.constant(positional_encoding(t, s, p)?);
    let mut h = g.add_suffix(x, pe)?;
    h = finite(g, h, || "input".into())?;
    let mut layers = Vec::with_capacity(weights.layers.len());
    for (i, lw) in weights.layers.iter().enumerate() {
        let trace = encoder_layer(g, h, lw, cfg, i)?;
        h = trace.output;
        layers.push(trace);
    }
    let flat = g.reshape(h, &[b, t * s * p])?;
    let pred = g.matmul(flat, weights.w_out)?;
    let pred = g.add_suffix(pred, weights.b_out)?;
    let prediction = finite(g, pred, || "output".into())?;
    Ok(ForwardVars { prediction, layers })
}

fn check_input(x: &Tensor, cfg: &ModelConfig) -> Result<()> {
    if x.shape() != cfg.input_shape() {
        return Err(FateError::shape("encoder_forward", x.shape(), &cfg.input_shape()));
    }
    Ok(())
}

/// Predictions for a batch of `T×S×P` inputs without recording gradients.
pub fn predict_batch(weights: &FateWeights, cfg: &ModelConfig, xs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Ok(vec![]);
    }
    xs.iter().try_for_each(|x| check_input(x, cfg))?;
    let mut g = Graph::new();
    let wv = WeightVars::register(&mut g, weights, false);
    let x = g.constant(Tensor::stack(xs)?);
    let fwd = build_forward(&mut g, x, &wv, cfg)?;
    Ok(g.value(fwd.prediction)
        .data()
        .chunks(cfg.n_targets)
        .map(<[f64]>::to_vec)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadModulation {
    /// `T×S×H`
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    /// `T×T×S×S`, indexed (t, t', s, s')
    pub rtilde: Tensor,
    /// `T×T×S`
    pub r: Tensor,
    /// `T×T×S`, normalized along the configured softmax axis
    pub atilde: Tensor,
    /// `T×S×H`
    pub a: Tensor,
}

/// Intermediate tensors of one encoder layer for a single sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationTensors {
    pub axis: SoftmaxAxis,
    pub heads: Vec<HeadModulation>,
    /// `T×S×P`
    pub y: Tensor,
}

impl ModulationTensors {
    fn extract(g: &Graph, trace: &LayerTrace, sample: usize, axis: SoftmaxAxis) -> Result<Self> {
        let take = |v: Var| g.value(v).index0(sample);
        let heads = trace
            .heads
            .iter()
            .map(|h| {
                Ok(HeadModulation {
                    q: take(h.q)?,
                    k: take(h.k)?,
                    v: take(h.v)?,
                    rtilde: take(h.rtilde)?.permute(&[0, 2, 1, 3])?,
                    r: take(h.r)?,
                    atilde: take(h.atilde)?,
                    a: take(h.a)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModulationTensors {
            axis,
            heads,
            y: take(trace.y)?,
        })
    }
}

/// Single-sample forward pass: prediction `[n_targets]` plus per-layer
/// modulation diagnostics.
pub fn encoder_forward(
    x: &Tensor,
    weights: &FateWeights,
    cfg: &ModelConfig,
) -> Result<(Tensor, Vec<ModulationTensors>)> {
    let out = encoder_forward_batch(&[x], weights, cfg)?;
    Ok(out.into_iter().next().expect("one sample"))
}

/// Batched variant of [`encoder_forward`].
pub fn encoder_forward_batch(
    xs: &[&Tensor],
    weights: &FateWeights,
    cfg: &ModelConfig,
) -> Result<Vec<(Tensor, Vec<ModulationTensors>)>> {
    cfg.validate()?;
    xs.iter().try_for_each(|x| check_input(x, cfg))?;
    let mut g = Graph::new();
    let wv = WeightVars::register(&mut g, weights, false);
    let x = g.constant(Tensor::stack(xs)?);
    let fwd = build_forward(&mut g, x, &wv, cfg)?;
    (0..xs.len())
        .map(|i| {
            let pred = g.value(fwd.prediction).index0(i)?;
            let diags = fwd
                .layers
                .iter()
                .map(|l| ModulationTensors::extract(&g, l, i, cfg.softmax_axis))
                .collect::<Result<Vec<_>>>()?;
            Ok((pred, diags))
        })
        .collect()
}

fn eval1(build: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    g.value(v).index0(0)
}

fn batch1(g: &mut Graph, t: &Tensor) -> Result<Var> {
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    Ok(g.constant(t.reshape(&shape)?))
}

/// Station-specific projections of `x: T×S×P` for one head of one layer.
pub fn project_qkv(
    x: &Tensor,
    layer: &EncoderLayerWeights,
    head: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    if head >= layer.wq.len() {
        return Err(FateError::contract(format!(
            "head {head} out of range for {} heads",
            layer.wq.len()
        )));
    }
    let one = |w: &Tensor| {
        eval1(|g| {
            let xv = batch1(g, x)?;
            let wv = g.constant(w.clone());
            project(g, xv, wv)
        })
    };
    Ok((one(&layer.wq[head])?, one(&layer.wk[head])?, one(&layer.wv[head])?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawScores {
    /// `T×T×S×S`: `R̃[t,t',s,s'] = Q[t,s,:]·K[t',s',:]`
    pub rtilde: Tensor,
    /// `T×T×S`: `R[t,t',s] = Σ_s' R̃[t,t',s,s'] / √H`
    pub r: Tensor,
}

pub fn raw_scores(q: &Tensor, k: &Tensor) -> Result<RawScores> {
    let mut g = Graph::new();
    let qv = batch1(&mut g, q)?;
    let kv = batch1(&mut g, k)?;
    let (rtilde, r) = scores(&mut g, qv, kv)?;
    Ok(RawScores {
        rtilde: g.value(rtilde).index0(0)?.permute(&[0, 2, 1, 3])?,
        r: g.value(r).index0(0)?,
    })
}

pub fn attention_weights(r: &Tensor, axis: SoftmaxAxis) -> Result<Tensor> {
    eval1(|g| {
        let rv = batch1(g, r)?;
        normalize(g, rv, axis)
    })
}

pub fn apply_attention(atilde: &Tensor, v: &Tensor) -> Result<Tensor> {
    eval1(|g| {
        let av = batch1(g, atilde)?;
        let vv = batch1(g, v)?;
        mix(g, av, vv)
    })
}

pub fn merge_heads(a_per_head: &[Tensor], wo: &Tensor) -> Result<Tensor> {
    if a_per_head.is_empty() {
        return Err(FateError::contract("merge_heads needs at least one head"));
    }
    eval1(|g| {
        let heads = a_per_head
            .iter()
            .map(|a| batch1(g, a))
            .collect::<Result<Vec<_>>>()?;
        let w = g.constant(wo.clone());
        merge(g, &heads, w)
    })
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

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            num_heads: 2,
            key_dim: 2,
            dense_units: 4,
            ..ModelConfig::new(2, 2, 3, 1)
        }
    }

    #[test]
    fn positional_encoding_examples() {
        let pe = positional_encoding(4, 3, 6).unwrap();
        for s in 0..3 {
            for j in (0..6).step_by(2) {
                assert_eq!(pe.get(&[0, s, j]).unwrap(), 0.0);
            }
        }
        assert!((pe.get(&[1, 0, 0]).unwrap() - 0.841_470_985).abs() < 1e-9);
        for t in 0..4 {
            for j in 0..6 {
                let v = pe.get(&[t, 0, j]).unwrap();
                assert!((-1.0..=1.0).contains(&v));
                assert_eq!(v, pe.get(&[t, 2, j]).unwrap());
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_qkv() {
        let cfg = small_cfg();
        let w = FateWeights::init(&cfg, 1).unwrap();
        let x = Tensor::zeros(&[2, 2, 3]).unwrap();
        let (q, k, v) = project_qkv(&x, &w.layers[0], 1).unwrap();
        for t in [q, k, v] {
            assert_eq!(t.shape(), &[2, 2, 2]);
            assert!(t.data().iter().all(|&x| x == 0.0));
        }
        assert!(project_qkv(&x, &w.layers[0], 2).is_err());
    }

    #[test]
    fn identity_projection_returns_input() {
        let cfg = ModelConfig {
            key_dim: 3,
            num_heads: 1,
            ..small_cfg()
        };
        let mut w = FateWeights::init(&cfg, 1).unwrap();
        let eye = Tensor::eye(3).unwrap();
        w.layers[0].wq[0] = Tensor::stack(&[&eye, &eye]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[2, 2, 3]);
        let (q, _, _) = project_qkv(&x, &w.layers[0], 0).unwrap();
        assert_eq!(q, x);
    }

    #[test]
    fn projection_matches_per_station_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = small_cfg();
        let w = FateWeights::init(&cfg, 5).unwrap();
        let x = random(&mut rng, &[2, 2, 3]);
        let (q, _, _) = project_qkv(&x, &w.layers[0], 1).unwrap();
        let wq = &w.layers[0].wq[1];
        for t in 0..2 {
            for s in 0..2 {
                for h in 0..2 {
                    let mut acc = 0.0;
                    for p in 0..3 {
                        acc += x.get(&[t, s, p]).unwrap() * wq.get(&[s, p, h]).unwrap();
                    }
                    assert!((q.get(&[t, s, h]).unwrap() - acc).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn raw_scores_hand_example() {
        let q = Tensor::new(&[2, 1, 1], vec![1.0, 2.0]).unwrap();
        let k = Tensor::new(&[2, 1, 1], vec![3.0, 4.0]).unwrap();
        let rs = raw_scores(&q, &k).unwrap();
        assert_eq!(rs.r.shape(), &[2, 2, 1]);
        assert_eq!(rs.r.data(), &[3.0, 4.0, 6.0, 8.0]);
        let zero = raw_scores(&Tensor::zeros(&[2, 3, 2]).unwrap(), &k.reshape(&[2, 1, 1]).unwrap());
        assert!(zero.is_err());
        let rs = raw_scores(&Tensor::zeros(&[2, 3, 2]).unwrap(), &Tensor::ones(&[2, 3, 2]).unwrap()).unwrap();
        assert_eq!(rs.r.shape(), &[2, 2, 3]);
        assert_eq!(rs.rtilde.shape(), &[2, 2, 3, 3]);
        assert!(rs.r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_scores_match_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (t, s, h) = (3, 2, 4);
        let q = random(&mut rng, &[t, s, h]);
        let k = random(&mut rng, &[t, s, h]);
        let rs = raw_scores(&q, &k).unwrap();
        for a in 0..t {
            for b in 0..t {
                for i in 0..s {
                    let mut total = 0.0;
                    for j in 0..s {
                        let dot: f64 = (0..h)
                            .map(|c| q.get(&[a, i, c]).unwrap() * k.get(&[b, j, c]).unwrap())
                            .sum();
                        assert!((rs.rtilde.get(&[a, b, i, j]).unwrap() - dot).abs() < 1e-14);
                        total += dot;
                    }
                    let want = total / (h as f64).sqrt();
                    assert!((rs.r.get(&[a, b, i]).unwrap() - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn attention_weight_examples() {
        let r = Tensor::full(&[3, 3, 2], 0.7).unwrap();
        let st = attention_weights(&r, SoftmaxAxis::Stations).unwrap();
        assert!(st.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let tm = attention_weights(&r, SoftmaxAxis::Time).unwrap();
        assert!(tm.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = random(&mut rng, &[3, 3, 1]);
        let ones = attention_weights(&single, SoftmaxAxis::Stations).unwrap();
        assert!(ones.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn apply_attention_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (t, s, h) = (3, 2, 2);
        let v = random(&mut rng, &[t, s, h]);
        let mut diag = Tensor::zeros(&[t, t, s]).unwrap();
        for a in 0..t {
            for i in 0..s {
                diag.set(&[a, a, i], 1.0).unwrap();
            }
        }
        assert_eq!(apply_attention(&diag, &v).unwrap(), v);

        let uniform = Tensor::full(&[t, t, s], 1.0 / t as f64).unwrap();
        let a = apply_attention(&uniform, &v).unwrap();
        for row in 0..t {
            for i in 0..s {
                for c in 0..h {
                    let mean: f64 = (0..t).map(|b| v.get(&[b, i, c]).unwrap()).sum::<f64>() / t as f64;
                    assert!((a.get(&[row, i, c]).unwrap() - mean).abs() < 1e-15);
                }
            }
        }

        let at = random(&mut rng, &[t, t, s]);
        let a = apply_attention(&at, &v).unwrap();
        for row in 0..t {
            for i in 0..s {
                for c in 0..h {
                    let want: f64 = (0..t)
                        .map(|b| at.get(&[row, b, i]).unwrap() * v.get(&[b, i, c]).unwrap())
                        .sum();
                    assert!((a.get(&[row, i, c]).unwrap() - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn merge_heads_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a0 = random(&mut rng, &[2, 2, 3]);
        let eye = Tensor::eye(3).unwrap().reshape(&[1, 3, 3]).unwrap();
        assert_eq!(merge_heads(std::slice::from_ref(&a0), &eye).unwrap(), a0);
        let zero = Tensor::zeros(&[2, 2, 3]).unwrap();
        let wo = random(&mut rng, &[2, 3, 4]);
        let y = merge_heads(&[zero.clone(), zero], &wo).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(matches!(merge_heads(std::slice::from_ref(&a0), &wo), Err(FateError::Contract(_))));

        let a1 = random(&mut rng, &[2, 2, 3]);
        let y = merge_heads(&[a0.clone(), a1.clone()], &wo).unwrap();
        for t in 0..2 {
            for s in 0..2 {
                for p in 0..4 {
                    let mut want = 0.0;
                    for (h, a) in [&a0, &a1].iter().enumerate() {
                        for c in 0..3 {
                            want += a.get(&[t, s, c]).unwrap() * wo.get(&[h, c, p]).unwrap();
                        }
                    }
                    assert!((y.get(&[t, s, p]).unwrap() - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn forward_shape_and_determinism() {
        let cfg = ModelConfig {
            n_targets: 3,
            ..small_cfg()
        };
        let w = FateWeights::init(&cfg, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random(&mut rng, &[2, 2, 3]);
        let (p1, d1) = encoder_forward(&x, &w, &cfg).unwrap();
        let (p2, d2) = encoder_forward(&x, &w, &cfg).unwrap();
        assert_eq!(p1.shape(), &[3]);
        assert_eq!(p1, p2);
        assert_eq!(d1, d2);
        assert_eq!(d1[0].heads.len(), 2);
        assert_eq!(d1[0].heads[0].rtilde.shape(), &[2, 2, 2, 2]);

        let bad = Tensor::zeros(&[2, 3, 3]).unwrap();
        assert!(matches!(encoder_forward(&bad, &w, &cfg), Err(FateError::Shape { .. })));
    }

    #[test]
    fn batched_prediction_matches_single() {
        let cfg = small_cfg();
        let w = FateWeights::init(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Tensor> = (0..4).map(|_| random(&mut rng, &[2, 2, 3])).collect();
        let refs: Vec<&Tensor> = xs.iter().collect();
        let batch = predict_batch(&w, &cfg, &refs).unwrap();
        for (x, p) in xs.iter().zip(&batch) {
            let (single, _) = encoder_forward(x, &w, &cfg).unwrap();
            for (a, b) in single.data().iter().zip(p) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn non_finite_weights_name_the_stage() {
        let cfg = small_cfg();
        let mut w = FateWeights::init(&cfg, 2).unwrap();
        w.layers[0].wk[1].data_mut()[0] = f64::INFINITY;
        let x = Tensor::ones(&[2, 2, 3]).unwrap();
        match encoder_forward(&x, &w, &cfg) {
            Err(FateError::Numeric { stage }) => assert_eq!(stage, "layer0.head1.key"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
