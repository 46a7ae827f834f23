//! Wengert tape: operations are recorded in execution order during the
//! forward pass and replayed in reverse to accumulate gradients.
//!
//! Values live in an arena indexed by [`VarId`]. Leaves are registered with
//! [`Tape::leaf`] / [`Tape::constant`]; every op output carries a propagated
//! needs-grad flag so the backward sweep skips subgraphs that cannot reach a
//! differentiable leaf.

use crate::{Error, Result};

use super::tensor::Tensor;

/// Arena index of a value on a tape.
pub type VarId = usize;

/// The fixed differentiable op set. Everything in the repo — generator,
/// captioner, DAE, detector, classifier, and the latent-update loss — is
/// expressed through these.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// inputs `[w, b, x]` with `w: [m, n]`, `b: [m]`, `x: [n]` -> `[m]`
    Affine,
    /// elementwise max(x, 0)
    Relu,
    Tanh,
    Sigmoid,
    /// 1-D vector -> probability vector (max-subtracted for stability)
    Softmax,
    /// elementwise, both inputs same shape
    Add,
    /// elementwise (Hadamard), both inputs same shape
    Mul,
    /// 1-D inputs concatenated in order
    Concat,
    /// contiguous 1-D slice
    Slice { start: usize, len: usize },
    /// mean over all elements -> scalar `[1]`
    Mean,
    /// negative log-likelihood of `target` under a probability vector -> `[1]`
    CrossEntropy { target: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Affine => "affine",
            Op::Relu => "relu",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softmax => "softmax",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
            Op::Mean => "mean",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Entry {
    value: Tensor,
    /// `None` for leaves.
    node: Option<(Op, Vec<VarId>)>,
}

/// Gradients produced by a backward pass, indexed by [`VarId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to a leaf that was registered with
    /// `requires_grad`; errors if none was recorded for `id`.
    pub fn wrt(&self, id: VarId) -> Result<&Tensor> {
        self.get(id).ok_or_else(|| Error::Config(format!("no gradient recorded for var {id}")))
    }
}

#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Register a leaf. Its `requires_grad` flag decides whether backward
    /// produces a gradient for it.
    pub fn leaf(&mut self, t: Tensor) -> VarId {
        let id = self.entries.len();
        self.entries.push(Entry { value: t, node: None });
        id
    }

    /// Register a non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> VarId {
        let mut t = t;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.entries[id].value
    }

    /// Execute `op` on `inputs`, record the result, and return its id.
    ///
    /// Output values are checked for finiteness: an op only completes if every
    /// produced element is finite.
    pub fn apply(&mut self, op: Op, inputs: &[VarId]) -> Result<VarId> {
        for &i in inputs {
            if i >= self.entries.len() {
                return Err(Error::Config(format!("input var {i} not on tape")));
            }
        }
        let needs_grad = inputs.iter().any(|&i| self.entries[i].value.requires_grad());
        let vals: Vec<&Tensor> = inputs.iter().map(|&i| &self.entries[i].value).collect();
        let mut out = eval(&op, &vals).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { op: op.name().into() },
            other => other,
        })?;
        if !out.is_finite() {
            return Err(Error::NonFinite { op: op.name().into() });
        }
        out.set_requires_grad(needs_grad);
        let id = self.entries.len();
        self.entries.push(Entry { value: out, node: Some((op, inputs.to_vec())) });
        Ok(id)
    }

    pub fn affine(&mut self, w: VarId, b: VarId, x: VarId) -> Result<VarId> {
        self.apply(Op::Affine, &[w, b, x])
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId> {
        self.apply(Op::Relu, &[x])
    }

    pub fn tanh(&mut self, x: VarId) -> Result<VarId> {
        self.apply(Op::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId> {
        self.apply(Op::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: VarId) -> Result<VarId> {
        self.apply(Op::Softmax, &[x])
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        self.apply(Op::Concat, parts)
    }

    pub fn slice(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        self.apply(Op::Slice { start, len }, &[x])
    }

    pub fn mean(&mut self, x: VarId) -> Result<VarId> {
        self.apply(Op::Mean, &[x])
    }

    pub fn cross_entropy(&mut self, probs: VarId, target: usize) -> Result<VarId> {
        self.apply(Op::CrossEntropy { target }, &[probs])
    }

    /// Mean squared error against a fixed target: `mean((x - target)^2)`.
    /// Composite of the core ops, not a new op kind.
    pub fn mse_to(&mut self, x: VarId, target: &Tensor) -> Result<VarId> {
        let neg = Tensor::new(
            target.shape().to_vec(),
            target.data().iter().map(|v| -v).collect(),
        )?;
        let neg = self.constant(neg);
        let diff = self.add(x, neg)?;
        let sq = self.mul(diff, diff)?;
        self.mean(sq)
    }

    /// Reverse sweep from a scalar loss produced on this tape.
    ///
    /// Returns a gradient for every leaf registered with `requires_grad`
    /// (zeros when the loss does not depend on it). A tensor used several
    /// times accumulates the sum of its contributions.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        let Some(loss_entry) = self.entries.get(loss) else {
            return Err(Error::Config(format!("loss var {loss} not on tape")));
        };
        if !loss_entry.value.is_scalar() {
            return Err(Error::Shape {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", loss_entry.value.shape()),
            });
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.entries.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let entry = &self.entries[id];
            if !entry.value.requires_grad() {
                continue;
            }
            let Some((op, inputs)) = &entry.node else { continue };
            let Some(dy) = grads[id].take() else { continue };
            let in_vals: Vec<&Tensor> = inputs.iter().map(|&i| &self.entries[i].value).collect();
            let contributions = eval_backward(op, &in_vals, &entry.value, &dy);
            grads[id] = Some(dy);
            for (&input, contrib) in inputs.iter().zip(contributions) {
                if !self.entries[input].value.requires_grad() {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    slot => *slot = Some(contrib),
                }
            }
        }

        let grads = self
            .entries
            .iter()
            .zip(grads)
            .map(|(entry, g)| match g {
                Some(data) => Some(Tensor::from_raw(entry.value.shape().to_vec(), data)),
                None if entry.node.is_none() && entry.value.requires_grad() => {
                    Some(Tensor::zeros(entry.value.shape().to_vec()))
                }
                None => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

/// One SGD step: `param <- param - lr * grad` for every (id, param) pair.
pub fn sgd_step<'a, I>(params: I, grads: &Gradients, learning_rate: f64) -> Result<()>
where
    I: IntoIterator<Item = (VarId, &'a mut Tensor)>,
{
    for (id, param) in params {
        let grad = grads
            .get(id)
            .ok_or_else(|| Error::Config(format!("missing gradient for parameter var {id}")))?;
        if grad.shape() != param.shape() {
            return Err(Error::Shape {
                op: "sgd_step",
                detail: format!(
                    "parameter shape {:?} vs gradient shape {:?}",
                    param.shape(),
                    grad.shape()
                ),
            });
        }
        for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
            *p -= learning_rate * g;
        }
    }
    Ok(())
}

fn shape_err(op: &Op, detail: String) -> Error {
    Error::Shape { op: op.name(), detail }
}

fn want_arity(op: &Op, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(shape_err(op, format!("expected {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

fn want_1d<'a>(op: &Op, t: &'a Tensor, role: &str) -> Result<&'a [f64]> {
    if t.shape().len() != 1 {
        return Err(shape_err(op, format!("{role} must be 1-D, got shape {:?}", t.shape())));
    }
    Ok(t.data())
}

fn eval(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Affine => {
            want_arity(op, inputs, 3)?;
            let (w, b, x) = (inputs[0], inputs[1], inputs[2]);
            let [m, n] = *w.shape() else {
                return Err(shape_err(op, format!("weight must be 2-D, got {:?}", w.shape())));
            };
            if b.shape() != [m] || x.shape() != [n] {
                return Err(shape_err(
                    op,
                    format!(
                        "w {:?} needs b [{m}] and x [{n}], got b {:?}, x {:?}",
                        w.shape(),
                        b.shape(),
                        x.shape()
                    ),
                ));
            }
            let wd = w.data();
            let xd = x.data();
            let mut out = b.data().to_vec();
            for (i, o) in out.iter_mut().enumerate() {
                let row = &wd[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(xd) {
                    acc += wv * xv;
                }
                *o += acc;
            }
            Tensor::new(vec![m], out)
        }
        Op::Relu | Op::Tanh | Op::Sigmoid => {
            want_arity(op, inputs, 1)?;
            let x = inputs[0];
            let f = |v: f64| match op {
                Op::Relu => v.max(0.0),
                Op::Tanh => v.tanh(),
                _ => 1.0 / (1.0 + (-v).exp()),
            };
            Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        }
        Op::Softmax => {
            want_arity(op, inputs, 1)?;
            let x = want_1d(op, inputs[0], "input")?;
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Tensor::new(vec![x.len()], exps.into_iter().map(|e| e / sum).collect())
        }
        Op::Add | Op::Mul => {
            want_arity(op, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(shape_err(
                    op,
                    format!("operands differ: {:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            let f: fn(f64, f64) -> f64 =
                if matches!(op, Op::Add) { |x, y| x + y } else { |x, y| x * y };
            Tensor::new(
                a.shape().to_vec(),
                a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            )
        }
        Op::Concat => {
            if inputs.is_empty() {
                return Err(shape_err(op, "expected at least one input".into()));
            }
            let mut out = Vec::new();
            for t in inputs {
                out.extend_from_slice(want_1d(op, t, "every input")?);
            }
            Tensor::new(vec![out.len()], out)
        }
        Op::Slice { start, len } => {
            want_arity(op, inputs, 1)?;
            let x = want_1d(op, inputs[0], "input")?;
            if *len == 0 || start + len > x.len() {
                return Err(shape_err(
                    op,
                    format!("range {start}..{} out of bounds for length {}", start + len, x.len()),
                ));
            }
            Tensor::new(vec![*len], x[*start..start + len].to_vec())
        }
        Op::Mean => {
            want_arity(op, inputs, 1)?;
            let x = inputs[0];
            Ok(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
        }
        Op::CrossEntropy { target } => {
            want_arity(op, inputs, 1)?;
            let p = want_1d(op, inputs[0], "probability vector")?;
            if *target >= p.len() {
                return Err(shape_err(
                    op,
                    format!("target {target} out of range for {} classes", p.len()),
                ));
            }
            // -ln(0) = inf is caught by the finiteness gate in apply().
            Ok(Tensor::scalar(-p[*target].ln()))
        }
    }
}

/// Local backward rule: upstream `dy` against recorded inputs/output, one
/// gradient vector per input.
fn eval_backward(op: &Op, inputs: &[&Tensor], output: &Tensor, dy: &[f64]) -> Vec<Vec<f64>> {
    match op {
        Op::Affine => {
            let (w, _b, x) = (inputs[0], inputs[1], inputs[2]);
            let [m, n] = *w.shape() else { unreachable!() };
            let wd = w.data();
            let xd = x.data();
            let mut dw = vec![0.0; m * n];
            let mut dx = vec![0.0; n];
            for i in 0..m {
                let g = dy[i];
                let row = &wd[i * n..(i + 1) * n];
                let drow = &mut dw[i * n..(i + 1) * n];
                for j in 0..n {
                    drow[j] = g * xd[j];
                    dx[j] += g * row[j];
                }
            }
            vec![dw, dy.to_vec(), dx]
        }
        Op::Relu => {
            let x = inputs[0].data();
            vec![dy.iter().zip(x).map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }).collect()]
        }
        Op::Tanh => {
            let y = output.data();
            vec![dy.iter().zip(y).map(|(&d, &v)| d * (1.0 - v * v)).collect()]
        }
        Op::Sigmoid => {
            let y = output.data();
            vec![dy.iter().zip(y).map(|(&d, &v)| d * v * (1.0 - v)).collect()]
        }
        Op::Softmax => {
            let y = output.data();
            let dot: f64 = dy.iter().zip(y).map(|(&d, &v)| d * v).sum();
            vec![y.iter().zip(dy).map(|(&v, &d)| v * (d - dot)).collect()]
        }
        Op::Add => vec![dy.to_vec(), dy.to_vec()],
        Op::Mul => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            vec![
                dy.iter().zip(b).map(|(&d, &v)| d * v).collect(),
                dy.iter().zip(a).map(|(&d, &v)| d * v).collect(),
            ]
        }
        Op::Concat => {
            let mut offset = 0;
            inputs
                .iter()
                .map(|t| {
                    let n = t.len();
                    let part = dy[offset..offset + n].to_vec();
                    offset += n;
                    part
                })
                .collect()
        }
        Op::Slice { start, len } => {
            let mut dx = vec![0.0; inputs[0].len()];
            dx[*start..start + len].copy_from_slice(dy);
            vec![dx]
        }
        Op::Mean => {
            let n = inputs[0].len() as f64;
            vec![vec![dy[0] / n; inputs[0].len()]]
        }
        Op::CrossEntropy { target } => {
            let p = inputs[0].data();
            let mut dp = vec![0.0; p.len()];
            dp[*target] = -dy[0] / p[*target];
            vec![dp]
        }
    }
}
