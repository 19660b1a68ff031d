use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    BroadcastAddRow { m: Var, r: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Act { kind: Activation, x: Var },
    Softmax { x: Var },
    LogSoftmax { x: Var },
    MeanRows { x: Var },
    ConcatVec { parts: Vec<Var> },
    StackRows { parts: Vec<Var> },
    Embed { table: Var, index: usize },
    Pick { x: Var, index: usize },
    Slice { x: Var, start: usize, len: usize },
    Sum { x: Var },
    Scale { x: Var, factor: f64 },
    Reshape { x: Var },
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    values: Vec<f64>,
    needs_grad: bool,
}

/// Append-only record of forward operations, replayed in reverse by
/// [`Tape::backward`]. Inputs of every node precede it, so a single reverse
/// sweep visits each node exactly once; gradient accumulation follows node
/// index order, which makes repeated runs bit-identical.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn as_2d(shape: &[usize]) -> (usize, usize) {
    Tensor::as_2d(shape)
}

/// Length of a vector-like tensor: at most one non-unit dimension.
fn vector_len(shape: &[usize]) -> Option<usize> {
    let numel: usize = shape.iter().product();
    if shape.iter().filter(|&&d| d > 1).count() <= 1 {
        Some(numel)
    } else {
        None
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            op,
            shape,
            values,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf, honoring the tensor's `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            Op::Leaf,
            t.shape().to_vec(),
            t.values().to_vec(),
            t.requires_grad(),
        )
    }

    /// Records a non-differentiable input (cached features, previous states).
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.values().to_vec(), false)
    }

    pub fn constant_vec(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(Op::Leaf, shape, values, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Gradient of the last `backward` pass with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `a · b` where `a` is `[m,k]` (or a length-`k` vector) and `b` is `[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = as_2d(self.shape_of(a));
        let bshape = self.shape_of(b);
        if bshape.len() != 2 {
            return Err(Error::Dim {
                op: "matmul",
                lhs: self.shape_of(a).to_vec(),
                rhs: bshape.to_vec(),
            });
        }
        let (k2, n) = (bshape[0], bshape[1]);
        if k != k2 {
            return Err(Error::Dim {
                op: "matmul",
                lhs: self.shape_of(a).to_vec(),
                rhs: bshape.to_vec(),
            });
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, bb) in orow.iter_mut().zip(brow) {
                    *o += x * bb;
                }
            }
        }
        let shape = if self.shape_of(a).len() <= 1 {
            vec![n]
        } else {
            vec![m, n]
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul { a, b }, shape, out, needs))
    }

    /// Adds row vector `r` to every row of `m` (the broadcast `⊕`).
    pub fn broadcast_add_row(&mut self, m: Var, r: Var) -> Result<Var> {
        let (rows, cols) = as_2d(self.shape_of(m));
        let rlen = match vector_len(self.shape_of(r)) {
            Some(l) => l,
            None => {
                return Err(Error::Dim {
                    op: "broadcast_add_row",
                    lhs: self.shape_of(m).to_vec(),
                    rhs: self.shape_of(r).to_vec(),
                })
            }
        };
        if rlen != cols {
            return Err(Error::Dim {
                op: "broadcast_add_row",
                lhs: self.shape_of(m).to_vec(),
                rhs: self.shape_of(r).to_vec(),
            });
        }
        let mv = &self.nodes[m.0].values;
        let rv = &self.nodes[r.0].values;
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                out.push(mv[i * cols + j] + rv[j]);
            }
        }
        let shape = self.shape_of(m).to_vec();
        let needs = self.needs(m) || self.needs(r);
        Ok(self.push(Op::BroadcastAddRow { m, r }, shape, out, needs))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::Dim {
                op: "add",
                lhs: self.shape_of(a).to_vec(),
                rhs: self.shape_of(b).to_vec(),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape_of(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, shape, out, needs))
    }

    /// Elementwise product (the `⊙` gating operator).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::Dim {
                op: "mul",
                lhs: self.shape_of(a).to_vec(),
                rhs: self.shape_of(b).to_vec(),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape_of(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul { a, b }, shape, out, needs))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| match kind {
                Activation::Tanh => v.tanh(),
                Activation::Sigmoid => stable_sigmoid(v),
                Activation::Relu => v.max(0.0),
            })
            .collect();
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs(x);
        self.push(Op::Act { kind, x }, shape, out, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(Activation::Relu, x)
    }

    /// Softmax over a vector-like tensor (`[L]`, `[L,1]`, or `[1,L]`),
    /// computed with max-subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let len = vector_len(self.shape_of(x)).ok_or_else(|| Error::Dim {
            op: "softmax",
            lhs: self.shape_of(x).to_vec(),
            rhs: vec![],
        })?;
        let xs = &self.nodes[x.0].values;
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = xs.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = out.iter().sum();
        for o in out.iter_mut() {
            *o /= z;
        }
        debug_assert_eq!(out.len(), len);
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::Softmax { x }, shape, out, needs))
    }

    /// `log(softmax(x))` fused for stability, over a vector-like tensor.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        vector_len(self.shape_of(x)).ok_or_else(|| Error::Dim {
            op: "log_softmax",
            lhs: self.shape_of(x).to_vec(),
            rhs: vec![],
        })?;
        let xs = &self.nodes[x.0].values;
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logz = xs.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let out: Vec<f64> = xs.iter().map(|&v| v - max - logz).collect();
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::LogSoftmax { x }, shape, out, needs))
    }

    /// Column means of a matrix: `[L,d] -> [d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = as_2d(self.shape_of(x));
        let xs = &self.nodes[x.0].values;
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j] += xs[i * cols + j];
            }
        }
        for o in out.iter_mut() {
            *o /= rows as f64;
        }
        let needs = self.needs(x);
        Ok(self.push(Op::MeanRows { x }, vec![cols], out, needs))
    }

    /// Concatenates vector-like tensors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero tensors"));
        }
        let mut out = Vec::new();
        let mut needs = false;
        for &p in parts {
            if vector_len(self.shape_of(p)).is_none() {
                return Err(Error::Dim {
                    op: "concat",
                    lhs: self.shape_of(p).to_vec(),
                    rhs: vec![],
                });
            }
            out.extend_from_slice(&self.nodes[p.0].values);
            needs |= self.needs(p);
        }
        let len = out.len();
        Ok(self.push(
            Op::ConcatVec {
                parts: parts.to_vec(),
            },
            vec![len],
            out,
            needs,
        ))
    }

    /// Stacks matrices with equal column counts along the row axis.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("stack_rows of zero tensors"));
        }
        let (_, cols) = as_2d(self.shape_of(parts[0]));
        let mut out = Vec::new();
        let mut rows = 0;
        let mut needs = false;
        for &p in parts {
            let (r, c) = as_2d(self.shape_of(p));
            if c != cols {
                return Err(Error::Dim {
                    op: "stack_rows",
                    lhs: vec![rows, cols],
                    rhs: self.shape_of(p).to_vec(),
                });
            }
            rows += r;
            out.extend_from_slice(&self.nodes[p.0].values);
            needs |= self.needs(p);
        }
        Ok(self.push(
            Op::StackRows {
                parts: parts.to_vec(),
            },
            vec![rows, cols],
            out,
            needs,
        ))
    }

    /// Row lookup into an embedding table `[K,e]`; the backward pass scatters
    /// the output gradient into the selected row only.
    pub fn embedding(&mut self, table: Var, index: usize) -> Result<Var> {
        let shape = self.shape_of(table);
        if shape.len() != 2 {
            return Err(Error::Dim {
                op: "embedding",
                lhs: shape.to_vec(),
                rhs: vec![],
            });
        }
        let (k, e) = (shape[0], shape[1]);
        if index >= k {
            return Err(Error::Vocab { index, size: k });
        }
        let out = self.nodes[table.0].values[index * e..(index + 1) * e].to_vec();
        let needs = self.needs(table);
        Ok(self.push(Op::Embed { table, index }, vec![e], out, needs))
    }

    /// Extracts a single element of a vector-like tensor as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let len = vector_len(self.shape_of(x)).ok_or_else(|| Error::Dim {
            op: "pick",
            lhs: self.shape_of(x).to_vec(),
            rhs: vec![],
        })?;
        if index >= len {
            return Err(Error::Vocab { index, size: len });
        }
        let out = vec![self.nodes[x.0].values[index]];
        let needs = self.needs(x);
        Ok(self.push(Op::Pick { x, index }, vec![], out, needs))
    }

    /// Contiguous sub-vector `x[start .. start+len]`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let total = vector_len(self.shape_of(x)).ok_or_else(|| Error::Dim {
            op: "slice",
            lhs: self.shape_of(x).to_vec(),
            rhs: vec![],
        })?;
        if start + len > total {
            return Err(Error::contract(format!(
                "slice {start}..{} out of bounds for length {total}",
                start + len
            )));
        }
        let out = self.nodes[x.0].values[start..start + len].to_vec();
        let needs = self.needs(x);
        Ok(self.push(Op::Slice { x, start, len }, vec![len], out, needs))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].values.iter().sum();
        let needs = self.needs(x);
        self.push(Op::Sum { x }, vec![], vec![s], needs)
    }

    /// Multiplication by a compile-time constant factor.
    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v * factor).collect();
        let shape = self.shape_of(x).to_vec();
        let needs = self.needs(x);
        self.push(Op::Scale { x, factor }, shape, out, needs)
    }

    /// Reinterprets the value buffer under a new shape of equal size.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[x.0].values.len() || shape.len() > 2 {
            return Err(Error::Dim {
                op: "reshape",
                lhs: self.shape_of(x).to_vec(),
                rhs: shape,
            });
        }
        let out = self.nodes[x.0].values.clone();
        let needs = self.needs(x);
        Ok(self.push(Op::Reshape { x }, shape, out, needs))
    }

    fn add_grad(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, delta: &[f64]) {
        if !nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].values.len()]);
        for (g, d) in slot.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate additively
    /// across fan-out. Calling this twice on one tape is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::contract("backward already called on this tape"));
        }
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape_of(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let nodes = &self.nodes;
            match &nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = as_2d(&nodes[a.0].shape);
                    let n = nodes[b.0].shape[1];
                    let av = &nodes[a.0].values;
                    let bv = &nodes[b.0].values;
                    if nodes[a.0].needs_grad {
                        let mut da = vec![0.0; m * k];
                        for i2 in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i2 * n + j] * bv[p * n + j];
                                }
                                da[i2 * k + p] = s;
                            }
                        }
                        Self::add_grad(&mut grads, nodes, *a, &da);
                    }
                    if nodes[b.0].needs_grad {
                        let mut db = vec![0.0; k * n];
                        for p in 0..k {
                            for i2 in 0..m {
                                let x = av[i2 * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    db[p * n + j] += x * g[i2 * n + j];
                                }
                            }
                        }
                        Self::add_grad(&mut grads, nodes, *b, &db);
                    }
                }
                Op::BroadcastAddRow { m, r } => {
                    let (rows, cols) = as_2d(&nodes[m.0].shape);
                    Self::add_grad(&mut grads, nodes, *m, &g);
                    if nodes[r.0].needs_grad {
                        let mut dr = vec![0.0; cols];
                        for i2 in 0..rows {
                            for j in 0..cols {
                                dr[j] += g[i2 * cols + j];
                            }
                        }
                        Self::add_grad(&mut grads, nodes, *r, &dr);
                    }
                }
                Op::Add { a, b } => {
                    Self::add_grad(&mut grads, nodes, *a, &g);
                    Self::add_grad(&mut grads, nodes, *b, &g);
                }
                Op::Mul { a, b } => {
                    if nodes[a.0].needs_grad {
                        let da: Vec<f64> = g
                            .iter()
                            .zip(&nodes[b.0].values)
                            .map(|(gg, bb)| gg * bb)
                            .collect();
                        Self::add_grad(&mut grads, nodes, *a, &da);
                    }
                    if nodes[b.0].needs_grad {
                        let db: Vec<f64> = g
                            .iter()
                            .zip(&nodes[a.0].values)
                            .map(|(gg, aa)| gg * aa)
                            .collect();
                        Self::add_grad(&mut grads, nodes, *b, &db);
                    }
                }
                Op::Act { kind, x } => {
                    let y = &nodes[i].values;
                    let xin = &nodes[x.0].values;
                    let dx: Vec<f64> = match kind {
                        Activation::Tanh => g
                            .iter()
                            .zip(y)
                            .map(|(gg, yy)| gg * (1.0 - yy * yy))
                            .collect(),
                        Activation::Sigmoid => g
                            .iter()
                            .zip(y)
                            .map(|(gg, yy)| gg * yy * (1.0 - yy))
                            .collect(),
                        Activation::Relu => g
                            .iter()
                            .zip(xin)
                            .map(|(gg, xx)| if *xx > 0.0 { *gg } else { 0.0 })
                            .collect(),
                    };
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::Softmax { x } => {
                    let y = &nodes[i].values;
                    let dot: f64 = g.iter().zip(y).map(|(gg, yy)| gg * yy).sum();
                    let dx: Vec<f64> = g.iter().zip(y).map(|(gg, yy)| yy * (gg - dot)).collect();
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::LogSoftmax { x } => {
                    let y = &nodes[i].values;
                    let gsum: f64 = g.iter().sum();
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gg, yy)| gg - yy.exp() * gsum)
                        .collect();
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::MeanRows { x } => {
                    let (rows, cols) = as_2d(&nodes[x.0].shape);
                    let mut dx = vec![0.0; rows * cols];
                    for i2 in 0..rows {
                        for j in 0..cols {
                            dx[i2 * cols + j] = g[j] / rows as f64;
                        }
                    }
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::ConcatVec { parts } => {
                    let mut off = 0;
                    let parts = parts.clone();
                    for p in parts {
                        let len = nodes[p.0].values.len();
                        let piece = g[off..off + len].to_vec();
                        Self::add_grad(&mut grads, nodes, p, &piece);
                        off += len;
                    }
                }
                Op::StackRows { parts } => {
                    let mut off = 0;
                    let parts = parts.clone();
                    for p in parts {
                        let len = nodes[p.0].values.len();
                        let piece = g[off..off + len].to_vec();
                        Self::add_grad(&mut grads, nodes, p, &piece);
                        off += len;
                    }
                }
                Op::Embed { table, index } => {
                    let e = nodes[table.0].shape[1];
                    let k = nodes[table.0].shape[0];
                    let mut dt = vec![0.0; k * e];
                    dt[index * e..(index + 1) * e].copy_from_slice(&g);
                    Self::add_grad(&mut grads, nodes, *table, &dt);
                }
                Op::Pick { x, index } => {
                    let mut dx = vec![0.0; nodes[x.0].values.len()];
                    dx[*index] = g[0];
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::Slice { x, start, len } => {
                    let mut dx = vec![0.0; nodes[x.0].values.len()];
                    dx[*start..*start + *len].copy_from_slice(&g);
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::Sum { x } => {
                    let dx = vec![g[0]; nodes[x.0].values.len()];
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::Scale { x, factor } => {
                    let dx: Vec<f64> = g.iter().map(|gg| gg * factor).collect();
                    Self::add_grad(&mut grads, nodes, *x, &dx);
                }
                Op::Reshape { x } => {
                    Self::add_grad(&mut grads, nodes, *x, &g);
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds this tape's gradient for `v` into the tensor's grad buffer.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        if let Some(g) = self.grad(v) {
            t.accumulate_grad(g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, values).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(&t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(&t(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_dot() {
        let mut tape = Tape::new();
        let a = tape.constant(&t(vec![1, 2], vec![1.0, 2.0]));
        let b = tape.constant(&t(vec![2, 1], vec![3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(&Tensor::zeros(vec![2, 3]));
        let b = tape.constant(&Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn broadcast_add_row_cases() {
        let mut tape = Tape::new();
        let m = tape.constant(&t(vec![2, 2], vec![1.0, 1.0, 2.0, 2.0]));
        let zero = tape.constant(&t(vec![2], vec![0.0, 0.0]));
        let r = tape.constant(&t(vec![2], vec![10.0, 20.0]));
        let same = tape.broadcast_add_row(m, zero).unwrap();
        assert_eq!(tape.value(same), &[1.0, 1.0, 2.0, 2.0]);
        let shifted = tape.broadcast_add_row(m, r).unwrap();
        assert_eq!(tape.value(shifted), &[11.0, 21.0, 12.0, 22.0]);
    }

    #[test]
    fn broadcast_add_row_length_mismatch() {
        let mut tape = Tape::new();
        let m = tape.constant(&Tensor::zeros(vec![2, 3]));
        let r = tape.constant(&Tensor::zeros(vec![2]));
        assert!(tape.broadcast_add_row(m, r).is_err());
    }

    #[test]
    fn activation_fixed_points() {
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::zeros(vec![3]));
        let s = tape.sigmoid(x);
        let th = tape.tanh(x);
        assert_eq!(tape.value(s), &[0.5, 0.5, 0.5]);
        assert_eq!(tape.value(th), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_stable_for_large_negative() {
        let mut tape = Tape::new();
        let x = tape.constant(&t(vec![2], vec![-1000.0, 1000.0]));
        let s = tape.sigmoid(x);
        let v = tape.value(s);
        assert!(v[0] >= 0.0 && v[0] < 1e-300);
        assert!((v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::zeros(vec![4]));
        let s = tape.softmax(x).unwrap();
        for &v in tape.value(s) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let big = tape.constant(&t(vec![2], vec![1000.0, 0.0]));
        let s2 = tape.softmax(big).unwrap();
        let v = tape.value(s2);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(v[0] > 1.0 - 1e-12 && v[1] < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(&t(vec![5], vec![0.3, -2.0, 1.7, 0.0, 4.2]));
        let s = tape.softmax(x).unwrap();
        let total: f64 = tape.value(s).iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(tape.value(s).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mean_rows_and_concat() {
        let mut tape = Tape::new();
        let m = tape.constant(&t(vec![2, 2], vec![2.0, 4.0, 4.0, 6.0]));
        let mr = tape.mean_rows(m).unwrap();
        assert_eq!(tape.value(mr), &[3.0, 5.0]);
        let a = tape.constant(&t(vec![2], vec![1.0, 2.0]));
        let b = tape.constant(&t(vec![1], vec![3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0]);
        assert_eq!(tape.shape_of(c), &[3]);
    }

    #[test]
    fn embedding_picks_row_and_grad_stays_in_row() {
        let mut tape = Tape::new();
        let table = tape.leaf(&t(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).with_grad());
        let row = tape.embedding(table, 0).unwrap();
        assert_eq!(tape.value(row), &[0.0, 1.0]);
        let s = tape.sum(row);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_index_out_of_range() {
        let mut tape = Tape::new();
        let table = tape.constant(&Tensor::zeros(vec![3, 2]));
        match tape.embedding(table, 3) {
            Err(Error::Vocab { index: 3, size: 3 }) => {}
            other => panic!("expected vocab error, got {other:?}"),
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![3], vec![1.0, -2.0, 0.5]).with_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_quadratic_gives_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![3], vec![1.0, -2.0, 0.5]).with_grad());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![2], vec![1.0, 2.0]).with_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        let err = tape.backward(s).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![2], vec![1.0, 2.0]).with_grad());
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn fanout_accumulates_gradient() {
        // y = x + x  =>  dy/dx = 2
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![2], vec![3.0, 4.0]).with_grad());
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn slice_and_pick_gradients_scatter() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(vec![4], vec![1.0, 2.0, 3.0, 4.0]).with_grad());
        let mid = tape.slice(x, 1, 2).unwrap();
        assert_eq!(tape.value(mid), &[2.0, 3.0]);
        let p = tape.pick(mid, 1).unwrap();
        assert_eq!(tape.value(p), &[3.0]);
        tape.backward(p).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || -> Vec<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(&t(vec![3], vec![0.37, -1.2, 2.4]).with_grad());
            let w = tape.leaf(&t(vec![3, 2], vec![0.1, -0.3, 0.7, 0.2, -0.5, 0.9]).with_grad());
            let y = tape.matmul(x, w).unwrap();
            let a = tape.tanh(y);
            let s = tape.sum(a);
            tape.backward(s).unwrap();
            let mut out = tape.grad(x).unwrap().to_vec();
            out.extend_from_slice(tape.grad(w).unwrap());
            out
        };
        let g1 = run();
        let g2 = run();
        assert_eq!(g1, g2, "identical runs must produce bit-identical gradients");
    }
}
