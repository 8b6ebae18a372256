use std::fmt;

use super::{finite, matmul_at_into, matmul_bt_into, sigmoid, transpose_buf, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation implemented outside the tape's built-in set.
///
/// `backward` receives the upstream gradient of the output and returns one
/// gradient buffer per input (`None` when the input is not differentiable).
pub trait Function {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &[f64],
    ) -> Result<Vec<Option<Vec<f64>>>>;
}

/// Element-wise operations with recorded gradient rules.
///
/// Binary variants accept equal shapes or a one-element operand broadcast
/// against the other.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Exp,
    Log1p,
    Relu,
    Scale(f64),
}

impl Elementwise {
    fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Elementwise::Add => "add",
            Elementwise::Sub => "sub",
            Elementwise::Mul => "mul",
            Elementwise::Sigmoid => "sigmoid",
            Elementwise::Tanh => "tanh",
            Elementwise::Exp => "exp",
            Elementwise::Log1p => "log1p",
            Elementwise::Relu => "relu",
            Elementwise::Scale(_) => "scale",
        }
    }
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Binary(Elementwise, Var, Var),
    Unary(Elementwise, Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    Reshape(Var),
    AddBias(Var, Var),
    ConcatLast(Vec<Var>),
    SliceLast(Var, usize),
    SelectTime(Var, usize),
    StackTime(Vec<Var>),
    Custom(Vec<Var>, Box<dyn Function>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Leaf => write!(f, "Leaf"),
            Op::Matmul(a, b) => write!(f, "Matmul({}, {})", a.0, b.0),
            Op::Transpose(a) => write!(f, "Transpose({})", a.0),
            Op::Binary(e, a, b) => write!(f, "{}({}, {})", e.name(), a.0, b.0),
            Op::Unary(e, a) => write!(f, "{}({})", e.name(), a.0),
            Op::Sum(a) => write!(f, "Sum({})", a.0),
            Op::Mean(a) => write!(f, "Mean({})", a.0),
            Op::SoftmaxRows(a) => write!(f, "SoftmaxRows({})", a.0),
            Op::Reshape(a) => write!(f, "Reshape({})", a.0),
            Op::AddBias(a, b) => write!(f, "AddBias({}, {})", a.0, b.0),
            Op::ConcatLast(vs) => write!(f, "ConcatLast({})", vs.len()),
            Op::SliceLast(a, s) => write!(f, "SliceLast({}, {s})", a.0),
            Op::SelectTime(a, t) => write!(f, "SelectTime({}, {t})", a.0),
            Op::StackTime(vs) => write!(f, "StackTime({})", vs.len()),
            Op::Custom(_, func) => write!(f, "Custom({})", func.name()),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Values are owned by the tape and addressed through [`Var`] handles.
/// [`Tape::backward`] replays the record in reverse and stores a gradient for
/// every node that depends on a differentiable leaf.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    /// Records a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    ///
    /// Differentiable nodes that the loss does not depend on get zeros;
    /// non-differentiable nodes return `None`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let data = self
            .grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; node.value.numel()]);
        Some(Tensor::from_parts(node.value.shape().to_vec(), data))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = finite(op_name, value)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record("matmul", value, Op::Matmul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.record("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != op.arity() {
            return Err(TensorError::Contract(format!(
                "{} expects {} input(s), got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        if op.arity() == 2 {
            let (a, b) = (inputs[0], inputs[1]);
            let (ta, tb) = (self.value(a), self.value(b));
            let shape = broadcast_shape(op.name(), ta, tb)?;
            let n = shape.iter().product::<usize>();
            let (da, db) = (ta.data(), tb.data());
            let at = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
            let f: fn(f64, f64) -> f64 = match op {
                Elementwise::Add => |x, y| x + y,
                Elementwise::Sub => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let data = (0..n).map(|i| f(at(da, i), at(db, i))).collect();
            self.record(op.name(), Tensor::from_parts(shape, data), Op::Binary(op, a, b), inputs)
        } else {
            let a = inputs[0];
            let t = self.value(a);
            let data = t.data().iter().map(|&x| unary_forward(op, x)).collect();
            let value = Tensor::from_parts(t.shape().to_vec(), data);
            self.record(op.name(), value, Op::Unary(op, a), inputs)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.elementwise(Elementwise::Scale(c), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.elementwise(Elementwise::Tanh, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.elementwise(Elementwise::Exp, &[a])
    }

    pub fn log1p(&mut self, a: Var) -> Result<Var> {
        self.elementwise(Elementwise::Log1p, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.elementwise(Elementwise::Relu, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.record("sum", Tensor::from_parts(vec![], vec![s]), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.record("mean", Tensor::from_parts(vec![], vec![s]), Op::Mean(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax_rows()?;
        self.record("softmax_rows", value, Op::SoftmaxRows(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.record("reshape", value, Op::Reshape(a), &[a])
    }

    /// Adds a bias vector to every row of the last axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (t, b) = (self.value(a), self.value(bias));
        let c = t.last_dim();
        if b.numel() != c || b.rank() > 1 {
            return Err(TensorError::dim(
                "add_bias",
                format!("bias {:?} against input {:?}", b.shape(), t.shape()),
            ));
        }
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            for (x, &bv) in row.iter_mut().zip(b.data()) {
                *x += bv;
            }
        }
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        self.record("add_bias", value, Op::AddBias(a, bias), &[a, bias])
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of zero tensors".into()))?;
        let lead = self.value(*first).shape()[..self.value(*first).rank() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() == 0 || t.shape()[..t.rank() - 1] != lead[..] {
                return Err(TensorError::dim(
                    "concat_last",
                    format!("leading axes {:?} vs {:?}", t.shape(), lead),
                ));
            }
            widths.push(t.last_dim());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.record("concat_last", Tensor::from_parts(shape, data), Op::ConcatLast(parts.to_vec()), parts)
    }

    /// Columns `start..start + width` of the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let t = self.value(a);
        let c = t.last_dim();
        if width == 0 || start + width > c || t.rank() == 0 {
            return Err(TensorError::dim(
                "slice_last",
                format!("{start}..{} of width {c}", start + width),
            ));
        }
        let data: Vec<f64> = t
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = width;
        self.record("slice_last", Tensor::from_parts(shape, data), Op::SliceLast(a, start), &[a])
    }

    /// `x[:, t, :]` of a `[batch, seq, feature]` tensor.
    pub fn select_time(&mut self, a: Var, t: usize) -> Result<Var> {
        let x = self.value(a);
        let (b, l, f) = x.dims3("select_time")?;
        if t >= l {
            return Err(TensorError::dim("select_time", format!("step {t} of {l}")));
        }
        let mut data = Vec::with_capacity(b * f);
        for bi in 0..b {
            let off = (bi * l + t) * f;
            data.extend_from_slice(&x.data()[off..off + f]);
        }
        self.record("select_time", Tensor::from_parts(vec![b, f], data), Op::SelectTime(a, t), &[a])
    }

    /// Stacks `[batch, feature]` steps into `[batch, seq, feature]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = steps
            .first()
            .ok_or_else(|| TensorError::Contract("stack of zero steps".into()))?;
        let (b, f) = self.value(*first).dims2("stack_time")?;
        for &s in steps {
            if self.value(s).shape() != [b, f] {
                return Err(TensorError::dim(
                    "stack_time",
                    format!("step shape {:?} vs [{b}, {f}]", self.value(s).shape()),
                ));
            }
        }
        let l = steps.len();
        let mut data = vec![0.0; b * l * f];
        for (t, &s) in steps.iter().enumerate() {
            let src = self.value(s).data();
            for bi in 0..b {
                let off = (bi * l + t) * f;
                data[off..off + f].copy_from_slice(&src[bi * f..(bi + 1) * f]);
            }
        }
        self.record("stack_time", Tensor::from_parts(vec![b, l, f], data), Op::StackTime(steps.to_vec()), steps)
    }

    /// Applies a user-defined differentiable function.
    pub fn apply(&mut self, func: Box<dyn Function>, inputs: &[Var]) -> Result<Var> {
        let value = {
            let args: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
            func.forward(&args)?
        };
        let name = func.name();
        self.record(name, value, Op::Custom(inputs.to_vec(), func), inputs)
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            // matmul gradients accumulate in place: weight gradients in
            // unrolled recurrences would otherwise be reallocated every step
            if let Op::Matmul(a, b) = node.op {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.nodes[a.0].requires_grad {
                    let acc = grads[a.0].get_or_insert_with(|| vec![0.0; m * k]);
                    matmul_bt_into(&g, tb.data(), acc, m, n, k);
                }
                if self.nodes[b.0].requires_grad {
                    let acc = grads[b.0].get_or_insert_with(|| vec![0.0; k * n]);
                    matmul_at_into(ta.data(), &g, acc, m, k, n);
                }
                grads[idx] = Some(g);
                continue;
            }
            let contributions = self.node_backward(node, &g)?;
            for (var, contrib) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, node: &Node, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Matmul(..) => unreachable!("matmul gradients are accumulated in backward"),
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                vec![(*a, transpose_buf(g, m, n))]
            }
            Op::Binary(op, a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let at = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
                let (ga_full, gb_full): (Vec<f64>, Vec<f64>) = match op {
                    Elementwise::Add => (g.to_vec(), g.to_vec()),
                    Elementwise::Sub => (g.to_vec(), g.iter().map(|x| -x).collect()),
                    _ => (
                        g.iter().enumerate().map(|(i, gi)| gi * at(tb.data(), i)).collect(),
                        g.iter().enumerate().map(|(i, gi)| gi * at(ta.data(), i)).collect(),
                    ),
                };
                let reduce = |full: Vec<f64>, t: &Tensor| {
                    if t.numel() == full.len() {
                        full
                    } else {
                        vec![full.iter().sum()]
                    }
                };
                vec![(*a, reduce(ga_full, ta)), (*b, reduce(gb_full, tb))]
            }
            Op::Unary(op, a) => {
                let x = val(*a).data();
                let y = out.data();
                let d: Vec<f64> = (0..g.len())
                    .map(|i| g[i] * unary_derivative(*op, x[i], y[i]))
                    .collect();
                vec![(*a, d)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; val(*a).numel()])],
            Op::Mean(a) => {
                let n = val(*a).numel();
                vec![(*a, vec![g[0] / n as f64; n])]
            }
            Op::SoftmaxRows(a) => {
                let c = out.last_dim();
                let mut d = vec![0.0; g.len()];
                for ((drow, grow), prow) in d.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c)) {
                    let dot: f64 = grow.iter().zip(prow).map(|(x, p)| x * p).sum();
                    for j in 0..c {
                        drow[j] = prow[j] * (grow[j] - dot);
                    }
                }
                vec![(*a, d)]
            }
            Op::Reshape(a) => vec![(*a, g.to_vec())],
            Op::AddBias(a, b) => {
                let c = out.last_dim();
                let mut gb = vec![0.0; c];
                for row in g.chunks(c) {
                    gb.iter_mut().zip(row).for_each(|(acc, x)| *acc += x);
                }
                vec![(*a, g.to_vec()), (*b, gb)]
            }
            Op::ConcatLast(parts) => {
                let total = out.last_dim();
                let rows = out.outer_len();
                let mut res = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).last_dim();
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    res.push((p, gp));
                    offset += w;
                }
                res
            }
            Op::SliceLast(a, start) => {
                let c = val(*a).last_dim();
                let w = out.last_dim();
                let mut d = vec![0.0; val(*a).numel()];
                for (drow, grow) in d.chunks_mut(c).zip(g.chunks(w)) {
                    drow[*start..*start + w].copy_from_slice(grow);
                }
                vec![(*a, d)]
            }
            Op::SelectTime(a, t) => {
                let (b, l, f) = (val(*a).shape()[0], val(*a).shape()[1], val(*a).shape()[2]);
                let mut d = vec![0.0; b * l * f];
                for bi in 0..b {
                    let off = (bi * l + t) * f;
                    d[off..off + f].copy_from_slice(&g[bi * f..(bi + 1) * f]);
                }
                vec![(*a, d)]
            }
            Op::StackTime(steps) => {
                let (b, l, f) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                steps
                    .iter()
                    .enumerate()
                    .map(|(t, &s)| {
                        let mut d = Vec::with_capacity(b * f);
                        for bi in 0..b {
                            let off = (bi * l + t) * f;
                            d.extend_from_slice(&g[off..off + f]);
                        }
                        (s, d)
                    })
                    .collect()
            }
            Op::Custom(inputs, func) => {
                let args: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                let grads = func.backward(&args, out, g)?;
                if grads.len() != inputs.len() {
                    return Err(TensorError::Contract(format!(
                        "{} returned {} gradients for {} inputs",
                        func.name(),
                        grads.len(),
                        inputs.len()
                    )));
                }
                inputs
                    .iter()
                    .zip(grads)
                    .filter_map(|(&v, gr)| gr.map(|gr| (v, gr)))
                    .collect()
            }
        })
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(TensorError::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn unary_forward(op: Elementwise, x: f64) -> f64 {
    match op {
        Elementwise::Sigmoid => sigmoid(x),
        Elementwise::Tanh => x.tanh(),
        Elementwise::Exp => x.exp(),
        Elementwise::Log1p => x.ln_1p(),
        Elementwise::Relu => x.max(0.0),
        Elementwise::Scale(c) => c * x,
        Elementwise::Add | Elementwise::Sub | Elementwise::Mul => unreachable!("binary op"),
    }
}

/// d(op)/dx given input `x` and output `y`.
fn unary_derivative(op: Elementwise, x: f64, y: f64) -> f64 {
    match op {
        Elementwise::Sigmoid => y * (1.0 - y),
        Elementwise::Tanh => 1.0 - y * y,
        Elementwise::Exp => y,
        Elementwise::Log1p => 1.0 / (1.0 + x),
        Elementwise::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Elementwise::Scale(c) => c,
        Elementwise::Add | Elementwise::Sub | Elementwise::Mul => unreachable!("binary op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let _unused = tape.tanh(x).unwrap();
        let loss = tape.constant(Tensor::scalar(0.0).unwrap());
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0).unwrap());
        let s = tape.sigmoid(x).unwrap();
        let th = tape.tanh(x).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);
        assert_eq!(tape.value(th).data(), &[0.0]);
    }

    #[test]
    fn scalar_broadcast_grad_is_summed() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let c = tape.param(Tensor::scalar(2.0).unwrap());
        let y = tape.mul(x, c).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(c).unwrap().data(), &[6.0]);
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0; 3]);
    }

    #[test]
    fn incompatible_shapes_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, b), Err(TensorError::Dimension { .. })));
        assert!(tape.elementwise(Elementwise::Add, &[a]).is_err());
    }

    #[test]
    fn log1p_outside_domain_is_non_finite() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1], &[-1.0]));
        assert!(matches!(tape.log1p(a), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn gradients_flow_only_to_params() {
        let mut tape = Tape::new();
        let c = tape.constant(t(&[2], &[1.0, 2.0]));
        let p = tape.param(t(&[2], &[3.0, 4.0]));
        let y = tape.mul(c, p).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(p).unwrap().data(), &[1.0, 2.0]);
    }
}
