use super::{kernels, Tensor};
use crate::error::{FateError, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + b` with `b` repeated over the leading axes of `a`.
    AddSuffix(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Index0(Var, usize),
    SumAxis(Var, usize),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    tracked: bool,
}

/// Tape of recorded tensor operations.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a single reverse sweep visits each node once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<BackwardFault>,
}

/// Deliberately wrong backward rules, used as a negative control for
/// gradient checking.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// Softmax input gradient scaled by 1.05.
    Softmax,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let tracked = t.requires_grad();
        self.push(Op::Leaf, t, tracked)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Graph::backward`] call, if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].value.grad_tensor()
    }

    fn push(&mut self, op: Op, value: Tensor, tracked: bool) -> Var {
        self.nodes.push(Node { op, value, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn record(&mut self, op: Op, inputs: &[Var], shape: Vec<usize>, data: Vec<f64>) -> Var {
        let tracked = self.tracked(inputs);
        self.push(op, Tensor::from_parts(shape, data), tracked)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(FateError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (Vec<usize>, Vec<f64>) {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        (x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (s, d) = self.zip_with(a, b, |p, q| p + q);
        Ok(self.record(Op::Add(a, b), &[a, b], s, d))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let (s, d) = self.zip_with(a, b, |p, q| p - q);
        Ok(self.record(Op::Sub(a, b), &[a, b], s, d))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (s, d) = self.zip_with(a, b, |p, q| p * q);
        Ok(self.record(Op::Mul(a, b), &[a, b], s, d))
    }

    /// Adds `b` to every trailing block of `a` whose shape equals `b`'s.
    pub fn add_suffix(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(FateError::shape("add_suffix", sa, sb));
        }
        let x = self.value(a);
        let y = self.value(b).data();
        let inner = y.len();
        let data = x
            .data()
            .chunks(inner)
            .flat_map(|c| c.iter().zip(y).map(|(p, q)| p + q))
            .collect();
        let s = x.shape().to_vec();
        Ok(self.record(Op::AddSuffix(a, b), &[a, b], s, data))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let x = self.value(a);
        let (s, d) = (x.shape().to_vec(), x.data().iter().map(|v| v * c).collect());
        self.record(Op::Scale(a, c), &[a], s, d)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::matmul(self.value(a), self.value(b))?;
        let s = value.shape().to_vec();
        Ok(self.record(Op::MatMul(a, b), &[a, b], s, value.into_data()))
    }

    /// `[B×m×k] · [B×k×n] → [B×m×n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(FateError::shape("batch_matmul", sa, sb));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; bt * m * n];
        for i in 0..bt {
            kernels::matmul_acc(
                &x[i * m * k..(i + 1) * m * k],
                &y[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        Ok(self.record(Op::BatchMatMul(a, b), &[a, b], vec![bt, m, n], out))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let value = self.value(a).permute(axes)?;
        let s = value.shape().to_vec();
        Ok(self.record(Op::Permute(a, axes.to_vec()), &[a], s, value.into_data()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.record(Op::Reshape(a), &[a], shape.to_vec(), value.into_data()))
    }

    pub fn index0(&mut self, a: Var, i: usize) -> Result<Var> {
        let value = self.value(a).index0(i)?;
        let s = value.shape().to_vec();
        Ok(self.record(Op::Index0(a, i), &[a], s, value.into_data()))
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.value(a).sum_axis(axis)?;
        let s = value.shape().to_vec();
        Ok(self.record(Op::SumAxis(a, axis), &[a], s, value.into_data()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.record(Op::Sum(a), &[a], vec![], vec![s])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.sum() / x.len() as f64;
        self.record(Op::Mean(a), &[a], vec![], vec![m])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = super::relu(self.value(a));
        let s = value.shape().to_vec();
        self.record(Op::Relu(a), &[a], s, value.into_data())
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() {
            return Err(FateError::shape("softmax", x.shape(), &[axis]));
        }
        let data = kernels::softmax_axis(x.data(), x.shape(), axis);
        let s = x.shape().to_vec();
        Ok(self.record(Op::Softmax(a, axis), &[a], s, data))
    }

    /// Layer normalization over the last axis of `x`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x);
        let n = *sx.last().ok_or_else(|| FateError::shape("layer_norm", sx, &[]))?;
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(FateError::shape("layer_norm", sx, self.shape(gamma)));
        }
        if eps <= 0.0 {
            return Err(FateError::contract("layer_norm eps must be positive"));
        }
        let (y, xhat, inv) = kernels::layer_norm(
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            n,
            eps,
        );
        let s = sx.to_vec();
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv,
        };
        Ok(self.record(op, &[x, gamma, beta], s, y))
    }

    /// Reverse sweep from a one-element `loss`, accumulating into every
    /// tracked node's gradient buffer. Fan-out contributions add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(FateError::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            for (v, contrib) in self.input_grads(i, &g) {
                if !self.nodes[v.0].tracked {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contrib),
                }
            }
            self.nodes[i].value.accumulate_grad(&g)?;
        }
        Ok(())
    }

    /// Clears gradient buffers on every node.
    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    fn input_grads(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let shp = |v: Var| self.nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|x| -x).collect())],
            Op::Mul(a, b) => {
                let da = g.iter().zip(val(*b)).map(|(g, y)| g * y).collect();
                let db = g.iter().zip(val(*a)).map(|(g, x)| g * x).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::AddSuffix(a, b) => {
                let inner = val(*b).len();
                let mut db = vec![0.0; inner];
                for c in g.chunks(inner) {
                    db.iter_mut().zip(c).for_each(|(d, x)| *d += x);
                }
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|x| x * c).collect())],
            Op::MatMul(a, b) => {
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let n = shp(*b)[1];
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                kernels::matmul_bt_acc(g, val(*b), &mut da, m, n, k);
                kernels::matmul_at_acc(val(*a), g, &mut db, m, k, n);
                vec![(*a, da), (*b, db)]
            }
            Op::BatchMatMul(a, b) => {
                let (bt, m, k) = (shp(*a)[0], shp(*a)[1], shp(*a)[2]);
                let n = shp(*b)[2];
                let (x, y) = (val(*a), val(*b));
                let mut da = vec![0.0; bt * m * k];
                let mut db = vec![0.0; bt * k * n];
                for t in 0..bt {
                    let gs = &g[t * m * n..(t + 1) * m * n];
                    kernels::matmul_bt_acc(
                        gs,
                        &y[t * k * n..(t + 1) * k * n],
                        &mut da[t * m * k..(t + 1) * m * k],
                        m,
                        n,
                        k,
                    );
                    kernels::matmul_at_acc(
                        &x[t * m * k..(t + 1) * m * k],
                        gs,
                        &mut db[t * k * n..(t + 1) * k * n],
                        m,
                        k,
                        n,
                    );
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Permute(a, axes) => {
                let inv = kernels::inverse_permutation(axes);
                let (_, d) = kernels::permute(g, node.value.shape(), &inv);
                vec![(*a, d)]
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::Index0(a, idx) => {
                let mut d = vec![0.0; val(*a).len()];
                let inner = g.len();
                d[idx * inner..(idx + 1) * inner].copy_from_slice(g);
                vec![(*a, d)]
            }
            Op::SumAxis(a, axis) => vec![(*a, kernels::expand_axis(g, shp(*a), *axis))],
            Op::Sum(a) => vec![(*a, vec![g[0]; val(*a).len()])],
            Op::Mean(a) => {
                let n = val(*a).len();
                vec![(*a, vec![g[0] / n as f64; n])]
            }
            Op::Relu(a) => {
                // subgradient 0 at exactly 0
                let d = g
                    .iter()
                    .zip(val(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![(*a, d)]
            }
            Op::Softmax(a, axis) => {
                let mut d = kernels::softmax_axis_backward(node.value.data(), g, node.value.shape(), *axis);
                if self.fault == Some(BackwardFault::Softmax) {
                    d.iter_mut().for_each(|x| *x *= 1.05);
                }
                vec![(*a, d)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv,
            } => {
                let n = val(*gamma).len();
                let (dx, dg, db) = kernels::layer_norm_backward(g, xhat, inv, val(*gamma), n);
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
        }
    }
}
