//! Minimal reverse-mode automatic differentiation over real `f64` tensors.
//!
//! A [`Tape`] is an append-only arena of tensors; every operation records its
//! inputs and the rule for pushing gradients back through it. Nodes are
//! created in topological order by construction, so the backward pass is a
//! single reverse sweep. Tapes are cheap and short-lived: training builds one
//! tape per batch, reads gradients out, and drops it.
//!
//! Shape checks are programming contracts and panic with both shapes in the
//! message; numeric failures surface as values (NaN checks live in the
//! training loops).

use std::sync::Arc;

/// Index of a tensor on its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// A tensor stored on the tape: shape, values, and (after `backward`) the
/// gradient of the loss with respect to it.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub requires_grad: bool,
}

/// A fixed real matrix used as the right-hand side of [`Tape::matmul_const`];
/// shared across tapes without copying.
#[derive(Debug)]
pub struct ConstMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ConstMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "const matrix data length mismatch");
        ConstMatrix { rows, cols, data }
    }
}

/// Hand-derived differentiable operation plugged into the tape, for forward
/// maps that are cheaper to differentiate analytically than to compose from
/// primitives.
pub trait CustomOp: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// Forward values and output shape from input `(values, shape)` pairs.
    fn forward(&self, inputs: &[(&[f64], &[usize])]) -> (Vec<f64>, Vec<usize>);
    /// Gradient of the loss w.r.t. each input, given input values, output
    /// values and the upstream output gradient. Must return one gradient
    /// buffer per input, each matching that input's length.
    fn backward(
        &self,
        inputs: &[(&[f64], &[usize])],
        out_values: &[f64],
        out_grad: &[f64],
    ) -> Vec<Vec<f64>>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    AddScalar(TensorId),
    MatMul(TensorId, TensorId),
    MatMulConst(TensorId, Arc<ConstMatrix>),
    Affine {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    Relu(TensorId),
    LeakyRelu(TensorId, f64),
    Tanh(TensorId),
    Exp(TensorId),
    Square(TensorId),
    Abs(TensorId),
    Sum(TensorId),
    Mean(TensorId),
    Concat(Vec<TensorId>, usize),
    Reshape(TensorId),
    Custom(Arc<dyn CustomOp>, Vec<TensorId>),
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `out += a * b` for row-major `a: m x k`, `b: k x n`.
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += a * b^T` for row-major `a: m x k`, `b: n x k` (contiguous dots).
fn matmul_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

/// `out += a^T * b` for row-major `a: k x m`, `b: k x n`.
fn matmul_at_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &ap) in arow.iter().enumerate() {
            if ap == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ap * bv;
            }
        }
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

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.values
    }

    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.grad
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(values.len(), numel(&shape));
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                values,
                grad,
                requires_grad,
            },
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Leaf tensor that accumulates a gradient (a trainable parameter).
    pub fn param(&mut self, values: Vec<f64>, shape: Vec<usize>) -> TensorId {
        assert_eq!(
            values.len(),
            numel(&shape),
            "param values length {} does not match shape {:?}",
            values.len(),
            shape
        );
        self.push(shape, values, true, Op::Leaf)
    }

    /// Leaf tensor without gradient tracking (inputs, noise, constants).
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> TensorId {
        assert_eq!(
            values.len(),
            numel(&shape),
            "constant values length {} does not match shape {:?}",
            values.len(),
            shape
        );
        self.push(shape, values, false, Op::Leaf)
    }

    fn assert_same_shape(&self, what: &str, a: TensorId, b: TensorId) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape("add", a, b);
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape("sub", a, b);
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x - y)
            .collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn multiply(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape("multiply", a, b);
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let values = self.values(a).iter().map(|x| x * c).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let values = self.values(a).iter().map(|x| x + c).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::AddScalar(a))
    }

    fn dims2(&self, id: TensorId, what: &str) -> (usize, usize) {
        let s = self.shape(id);
        assert!(s.len() == 2, "{what}: expected 2-D tensor, got shape {s:?}");
        (s[0], s[1])
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.dims2(a, "matmul lhs");
        let (k2, n) = self.dims2(b, "matmul rhs");
        assert_eq!(k, k2, "matmul: shape mismatch {m}x{k} * {k2}x{n}");
        let mut values = vec![0.0; m * n];
        matmul_acc(self.values(a), self.values(b), m, k, n, &mut values);
        self.push(vec![m, n], values, false, Op::MatMul(a, b))
    }

    /// Multiply by a fixed matrix shared across tapes: `a * c`. Gradients
    /// flow to `a` only.
    pub fn matmul_const(&mut self, a: TensorId, c: Arc<ConstMatrix>) -> TensorId {
        let (m, k) = self.dims2(a, "matmul_const lhs");
        assert_eq!(
            k, c.rows,
            "matmul_const: shape mismatch {m}x{k} * {}x{}",
            c.rows, c.cols
        );
        let mut values = vec![0.0; m * c.cols];
        matmul_acc(self.values(a), &c.data, m, k, c.cols, &mut values);
        let cols = c.cols;
        self.push(vec![m, cols], values, false, Op::MatMulConst(a, c))
    }

    /// Dense layer `x * w + b` with the bias broadcast over rows.
    pub fn affine(&mut self, x: TensorId, w: TensorId, b: TensorId) -> TensorId {
        let (rows, k) = self.dims2(x, "affine input");
        let (k2, cols) = self.dims2(w, "affine weight");
        assert_eq!(k, k2, "affine: shape mismatch {rows}x{k} * {k2}x{cols}");
        assert_eq!(
            self.shape(b),
            &[cols],
            "affine: bias shape {:?} does not match output width {cols}",
            self.shape(b)
        );
        let mut values = vec![0.0; rows * cols];
        matmul_acc(self.values(x), self.values(w), rows, k, cols, &mut values);
        let bias = self.values(b).to_vec();
        for row in values.chunks_mut(cols) {
            for (v, bv) in row.iter_mut().zip(&bias) {
                *v += bv;
            }
        }
        self.push(vec![rows, cols], values, false, Op::Affine { x, w, b })
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let values = self.values(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: TensorId, slope: f64) -> TensorId {
        let values = self
            .values(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        self.push(self.shape(a).to_vec(), values, false, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let values = self.values(a).iter().map(|x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Tanh(a))
    }

    pub fn exponential(&mut self, a: TensorId) -> TensorId {
        let values = self.values(a).iter().map(|x| x.exp()).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Exp(a))
    }

    pub fn square(&mut self, a: TensorId) -> TensorId {
        let values = self.values(a).iter().map(|x| x * x).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Square(a))
    }

    /// Element-wise absolute value; the subgradient at 0 is 0.
    pub fn absolute_value(&mut self, a: TensorId) -> TensorId {
        let values = self.values(a).iter().map(|x| x.abs()).collect();
        self.push(self.shape(a).to_vec(), values, false, Op::Abs(a))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.values(a).iter().sum();
        self.push(vec![1], vec![total], false, Op::Sum(a))
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = self.values(a).len();
        let total: f64 = self.values(a).iter().sum();
        self.push(vec![1], vec![total / n as f64], false, Op::Mean(a))
    }

    /// Concatenates 2-D tensors along `axis` (0 stacks rows, 1 widens rows).
    pub fn concatenate(&mut self, parts: &[TensorId], axis: usize) -> TensorId {
        assert!(!parts.is_empty(), "concatenate: no inputs");
        assert!(axis < 2, "concatenate: axis must be 0 or 1, got {axis}");
        let (r0, c0) = self.dims2(parts[0], "concatenate input");
        let (mut rows, mut cols) = (r0, c0);
        for &p in &parts[1..] {
            let (r, c) = self.dims2(p, "concatenate input");
            if axis == 0 {
                assert_eq!(
                    c, c0,
                    "concatenate axis 0: column mismatch {c} vs {c0}"
                );
                rows += r;
            } else {
                assert_eq!(r, r0, "concatenate axis 1: row mismatch {r} vs {r0}");
                cols += c;
            }
        }
        let mut values = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                values.extend_from_slice(self.values(p));
            }
        } else {
            for row in 0..rows {
                for &p in parts {
                    let c = self.shape(p)[1];
                    values.extend_from_slice(&self.values(p)[row * c..(row + 1) * c]);
                }
            }
        }
        self.push(
            vec![rows, cols],
            values,
            false,
            Op::Concat(parts.to_vec(), axis),
        )
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> TensorId {
        assert_eq!(
            numel(&shape),
            self.values(a).len(),
            "reshape: cannot view {:?} as {:?}",
            self.shape(a),
            shape
        );
        let values = self.values(a).to_vec();
        self.push(shape, values, false, Op::Reshape(a))
    }

    /// Runs a hand-differentiated operation on the tape.
    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[TensorId]) -> TensorId {
        let gathered: Vec<(&[f64], &[usize])> = inputs
            .iter()
            .map(|&id| {
                let t = &self.nodes[id.0].tensor;
                (t.values.as_slice(), t.shape.as_slice())
            })
            .collect();
        let (values, shape) = op.forward(&gathered);
        self.push(shape, values, false, Op::Custom(op, inputs.to_vec()))
    }

    /// Reparameterized Gaussian sample `mu + exp(log_var / 2) * noise`,
    /// differentiable in `mu` and `log_var`.
    pub fn reparameterize(&mut self, mu: TensorId, log_var: TensorId, noise: TensorId) -> TensorId {
        self.assert_same_shape("reparameterize", mu, log_var);
        self.assert_same_shape("reparameterize", mu, noise);
        let half = self.scale(log_var, 0.5);
        let std = self.exponential(half);
        let scaled = self.multiply(std, noise);
        self.add(mu, scaled)
    }

    /// KL divergence of a diagonal Gaussian `N(mu, exp(log_var))` from the
    /// standard normal, summed over all entries:
    /// `0.5 * sum(mu^2 + exp(log_var) - 1 - log_var)`.
    pub fn kl_to_standard_normal(&mut self, mu: TensorId, log_var: TensorId) -> TensorId {
        self.assert_same_shape("kl_to_standard_normal", mu, log_var);
        let n = self.values(mu).len() as f64;
        let mu_sq = self.square(mu);
        let mu_term = self.sum(mu_sq);
        let var = self.exponential(log_var);
        let var_term = self.sum(var);
        let lv_term = self.sum(log_var);
        let a = self.add(mu_term, var_term);
        let b = self.sub(a, lv_term);
        let c = self.add_scalar(b, -n);
        self.scale(c, 0.5)
    }

    /// Reverse sweep from a scalar loss. Gradients of every tensor reachable
    /// from `loss` are accumulated; unreachable tensors keep zero gradient.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(
            self.values(loss).len(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            self.shape(loss)
        );
        self.nodes[loss.0].tensor.grad[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(idx);
            let node = &mut rest[0];
            if node.tensor.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let grad = &node.tensor.grad;
            let out_values = &node.tensor.values;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for (g, d) in grad.iter().zip(&mut before[a.0].tensor.grad) {
                        *d += g;
                    }
                    for (g, d) in grad.iter().zip(&mut before[b.0].tensor.grad) {
                        *d += g;
                    }
                }
                Op::Sub(a, b) => {
                    for (g, d) in grad.iter().zip(&mut before[a.0].tensor.grad) {
                        *d += g;
                    }
                    for (g, d) in grad.iter().zip(&mut before[b.0].tensor.grad) {
                        *d -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    // Gradients need the sibling's values; borrow via split.
                    for i in 0..grad.len() {
                        let g = grad[i];
                        if g == 0.0 {
                            continue;
                        }
                        let av = before[a].tensor.values[i];
                        let bv = before[b].tensor.values[i];
                        before[a].tensor.grad[i] += g * bv;
                        before[b].tensor.grad[i] += g * av;
                    }
                }
                Op::Scale(a, c) => {
                    for (g, d) in grad.iter().zip(&mut before[a.0].tensor.grad) {
                        *d += g * c;
                    }
                }
                Op::AddScalar(a) => {
                    for (g, d) in grad.iter().zip(&mut before[a.0].tensor.grad) {
                        *d += g;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (before[a.0].tensor.shape[0], before[a.0].tensor.shape[1]);
                    let n = before[b.0].tensor.shape[1];
                    let a_vals = before[a.0].tensor.values.clone();
                    let b_vals = before[b.0].tensor.values.clone();
                    matmul_bt_acc(grad, &b_vals, m, n, k, &mut before[a.0].tensor.grad);
                    matmul_at_acc(&a_vals, grad, m, k, n, &mut before[b.0].tensor.grad);
                }
                Op::MatMulConst(a, c) => {
                    let m = before[a.0].tensor.shape[0];
                    matmul_bt_acc(grad, &c.data, m, c.cols, c.rows, &mut before[a.0].tensor.grad);
                }
                Op::Affine { x, w, b } => {
                    let (rows, k) = (before[x.0].tensor.shape[0], before[x.0].tensor.shape[1]);
                    let cols = before[w.0].tensor.shape[1];
                    let x_vals = before[x.0].tensor.values.clone();
                    let w_vals = before[w.0].tensor.values.clone();
                    matmul_bt_acc(grad, &w_vals, rows, cols, k, &mut before[x.0].tensor.grad);
                    matmul_at_acc(&x_vals, grad, rows, k, cols, &mut before[w.0].tensor.grad);
                    let db = &mut before[b.0].tensor.grad;
                    for row in grad.chunks(cols) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                }
                Op::Relu(a) => {
                    let a = a.0;
                    for i in 0..grad.len() {
                        if before[a].tensor.values[i] > 0.0 {
                            before[a].tensor.grad[i] += grad[i];
                        }
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let a = a.0;
                    for i in 0..grad.len() {
                        let factor = if before[a].tensor.values[i] > 0.0 {
                            1.0
                        } else {
                            *slope
                        };
                        before[a].tensor.grad[i] += grad[i] * factor;
                    }
                }
                Op::Tanh(a) => {
                    for i in 0..grad.len() {
                        let y = out_values[i];
                        before[a.0].tensor.grad[i] += grad[i] * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    for i in 0..grad.len() {
                        before[a.0].tensor.grad[i] += grad[i] * out_values[i];
                    }
                }
                Op::Square(a) => {
                    let a = a.0;
                    for i in 0..grad.len() {
                        before[a].tensor.grad[i] += 2.0 * grad[i] * before[a].tensor.values[i];
                    }
                }
                Op::Abs(a) => {
                    let a = a.0;
                    for i in 0..grad.len() {
                        let x = before[a].tensor.values[i];
                        let sign = if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        before[a].tensor.grad[i] += grad[i] * sign;
                    }
                }
                Op::Sum(a) => {
                    let g = grad[0];
                    for d in &mut before[a.0].tensor.grad {
                        *d += g;
                    }
                }
                Op::Mean(a) => {
                    let n = before[a.0].tensor.values.len() as f64;
                    let g = grad[0] / n;
                    for d in &mut before[a.0].tensor.grad {
                        *d += g;
                    }
                }
                Op::Concat(parts, axis) => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &p in parts {
                            let len = before[p.0].tensor.values.len();
                            for (d, g) in before[p.0]
                                .tensor
                                .grad
                                .iter_mut()
                                .zip(&grad[offset..offset + len])
                            {
                                *d += g;
                            }
                            offset += len;
                        }
                    } else {
                        let total_cols: usize =
                            parts.iter().map(|&p| before[p.0].tensor.shape[1]).sum();
                        let rows = before[parts[0].0].tensor.shape[0];
                        let mut col_offset = 0;
                        for &p in parts {
                            let c = before[p.0].tensor.shape[1];
                            for row in 0..rows {
                                let src = &grad[row * total_cols + col_offset
                                    ..row * total_cols + col_offset + c];
                                for (d, g) in before[p.0].tensor.grad[row * c..(row + 1) * c]
                                    .iter_mut()
                                    .zip(src)
                                {
                                    *d += g;
                                }
                            }
                            col_offset += c;
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (d, g) in before[a.0].tensor.grad.iter_mut().zip(grad) {
                        *d += g;
                    }
                }
                Op::Custom(op, inputs) => {
                    let gathered: Vec<(&[f64], &[usize])> = inputs
                        .iter()
                        .map(|&id| {
                            let t = &before[id.0].tensor;
                            (t.values.as_slice(), t.shape.as_slice())
                        })
                        .collect();
                    let input_grads = op.backward(&gathered, out_values, grad);
                    assert_eq!(
                        input_grads.len(),
                        inputs.len(),
                        "{}: backward returned {} gradients for {} inputs",
                        op.name(),
                        input_grads.len(),
                        inputs.len()
                    );
                    for (&id, ig) in inputs.iter().zip(input_grads) {
                        for (d, g) in before[id.0].tensor.grad.iter_mut().zip(ig) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }
}

/// Adam optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, param_lens: &[usize]) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over all parameter tensors.
pub fn adam_step(state: &mut AdamState, params: &mut [Vec<f64>], grads: &[Vec<f64>]) {
    assert_eq!(
        params.len(),
        state.first_moment.len(),
        "adam_step: {} parameter tensors but state tracks {}",
        params.len(),
        state.first_moment.len()
    );
    assert_eq!(params.len(), grads.len());
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(&mut state.second_moment))
    {
        assert_eq!(p.len(), g.len(), "adam_step: parameter/gradient length mismatch");
        for i in 0..p.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}

/// Central finite-difference gradient of `f` at `x`, the reference oracle
/// for gradient checks.
pub fn central_difference_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point);
        point[i] = orig - h;
        let minus = f(&point);
        point[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Relative error between two gradient vectors: `||a - b|| / max(||a||, ||b||)`,
/// 0 when both are zero.
pub fn gradient_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;
    use approx::assert_relative_eq;

    #[test]
    fn relu_forward_and_backward() {
        let mut t = Tape::new();
        let x = t.param(vec![-1.0, 2.0], vec![2]);
        let y = t.relu(x);
        assert_eq!(t.values(y), &[0.0, 2.0]);
        let s = t.sum(y);
        t.backward(s);
        assert_eq!(t.grad(x), &[0.0, 1.0]);
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut t = Tape::new();
        let eye = t.constant(vec![1.0, 0.0, 0.0, 1.0], vec![2, 2]);
        let a = t.constant(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let y = t.matmul(eye, a);
        assert_eq!(t.values(y), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.param(vec![-2.0, 0.0, 3.0], vec![3]);
        let y = t.absolute_value(x);
        let s = t.sum(y);
        t.backward(s);
        assert_eq!(t.grad(x), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0, 3.0], vec![3]);
        let sq = t.square(x);
        let loss = t.sum(sq);
        t.backward(loss);
        assert_eq!(t.grad(x), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unreachable_parameter_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0], vec![2]);
        let unused = t.param(vec![5.0], vec![1]);
        let sq = t.square(x);
        let loss = t.sum(sq);
        t.backward(loss);
        assert_eq!(t.grad(unused), &[0.0]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn add_shape_mismatch_panics_with_shapes() {
        let mut t = Tape::new();
        let a = t.constant(vec![1.0, 2.0], vec![2]);
        let b = t.constant(vec![1.0], vec![1]);
        t.add(a, b);
    }

    #[test]
    fn reparameterize_cases() {
        // Very negative log variance collapses the noise.
        let mut t = Tape::new();
        let mu = t.constant(vec![0.3, -0.7], vec![2]);
        let lv = t.constant(vec![-100.0, -100.0], vec![2]);
        let noise = t.constant(vec![5.0, -5.0], vec![2]);
        let z = t.reparameterize(mu, lv, noise);
        assert_relative_eq!(t.values(z)[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(t.values(z)[1], -0.7, epsilon = 1e-12);

        // Standard posterior passes the noise straight through.
        let mut t = Tape::new();
        let mu = t.constant(vec![0.0, 0.0], vec![2]);
        let lv = t.constant(vec![0.0, 0.0], vec![2]);
        let noise = t.constant(vec![1.25, -0.5], vec![2]);
        let z = t.reparameterize(mu, lv, noise);
        assert_eq!(t.values(z), &[1.25, -0.5]);

        // dz/dmu = identity.
        let mut t = Tape::new();
        let mu = t.param(vec![0.1, 0.2], vec![2]);
        let lv = t.constant(vec![-0.3, 0.4], vec![2]);
        let noise = t.constant(vec![0.9, -1.1], vec![2]);
        let z = t.reparameterize(mu, lv, noise);
        let s = t.sum(z);
        t.backward(s);
        assert_eq!(t.grad(mu), &[1.0, 1.0]);
    }

    #[test]
    fn kl_closed_form_values() {
        let mut t = Tape::new();
        let mu = t.constant(vec![0.0], vec![1]);
        let lv = t.constant(vec![0.0], vec![1]);
        let kl = t.kl_to_standard_normal(mu, lv);
        assert_eq!(t.values(kl), &[0.0]);

        let mut t = Tape::new();
        let mu = t.constant(vec![1.0], vec![1]);
        let lv = t.constant(vec![0.0], vec![1]);
        let kl = t.kl_to_standard_normal(mu, lv);
        assert_relative_eq!(t.values(kl)[0], 0.5, epsilon = 1e-12);

        let mut t = Tape::new();
        let mu = t.constant(vec![0.0], vec![1]);
        let lv = t.constant(vec![4.0f64.ln()], vec![1]);
        let kl = t.kl_to_standard_normal(mu, lv);
        assert_relative_eq!(t.values(kl)[0], 0.5 * (4.0 - 1.0 - 4.0f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn kl_non_negative_random_inputs() {
        let mut rng = Rng64::new(2);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..8).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let lv: Vec<f64> = (0..8).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let mut t = Tape::new();
            let mu = t.constant(mu, vec![8]);
            let lv = t.constant(lv, vec![8]);
            let kl = t.kl_to_standard_normal(mu, lv);
            assert!(t.values(kl)[0] >= 0.0);
        }
    }

    /// Three-layer MLP loss used for the finite-difference oracle.
    fn mlp_loss(flat: &[f64], input: &[f64]) -> f64 {
        let (d_in, h1, h2) = (4, 5, 3);
        let mut t = Tape::new();
        let mut off = 0;
        let mut take = |n: usize, shape: Vec<usize>, t: &mut Tape| {
            let vals = flat[off..off + n].to_vec();
            off += n;
            t.param(vals, shape)
        };
        let w1 = take(d_in * h1, vec![d_in, h1], &mut t);
        let b1 = take(h1, vec![h1], &mut t);
        let w2 = take(h1 * h2, vec![h1, h2], &mut t);
        let b2 = take(h2, vec![h2], &mut t);
        let w3 = take(h2, vec![h2, 1], &mut t);
        let b3 = take(1, vec![1], &mut t);

        let x = t.constant(input.to_vec(), vec![2, d_in]);
        let a1 = t.affine(x, w1, b1);
        let z1 = t.tanh(a1);
        let a2 = t.affine(z1, w2, b2);
        let z2 = t.relu(a2);
        let a3 = t.affine(z2, w3, b3);
        let sq = t.square(a3);
        let loss = t.sum(sq);
        t.values(loss)[0]
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = Rng64::new(10);
        let n_params = 4 * 5 + 5 + 5 * 3 + 3 + 3 + 1;
        let flat: Vec<f64> = (0..n_params).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let input: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();

        // Analytic gradients via one tape.
        let (d_in, h1, h2) = (4, 5, 3);
        let mut t = Tape::new();
        let mut ids = Vec::new();
        let mut off = 0;
        for (n, shape) in [
            (d_in * h1, vec![d_in, h1]),
            (h1, vec![h1]),
            (h1 * h2, vec![h1, h2]),
            (h2, vec![h2]),
            (h2, vec![h2, 1]),
            (1, vec![1]),
        ] {
            ids.push(t.param(flat[off..off + n].to_vec(), shape));
            off += n;
        }
        let x = t.constant(input.clone(), vec![2, d_in]);
        let a1 = t.affine(x, ids[0], ids[1]);
        let z1 = t.tanh(a1);
        let a2 = t.affine(z1, ids[2], ids[3]);
        let z2 = t.relu(a2);
        let a3 = t.affine(z2, ids[4], ids[5]);
        let sq = t.square(a3);
        let loss = t.sum(sq);
        t.backward(loss);
        let analytic: Vec<f64> = ids.iter().flat_map(|&id| t.grad(id).to_vec()).collect();

        let numeric = central_difference_grad(|p| mlp_loss(p, &input), &flat, 1e-5);
        let err = gradient_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "relative gradient error {err}");
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let build = || {
            let mut t = Tape::new();
            let x = t.param(vec![0.3, -0.8, 1.7, 0.05], vec![2, 2]);
            let w = t.param(vec![0.2, -0.4, 0.9, 0.1], vec![2, 2]);
            let y = t.matmul(x, w);
            let z = t.tanh(y);
            let sq = t.square(z);
            let loss = t.sum(sq);
            t.backward(loss);
            (t.grad(x).to_vec(), t.grad(w).to_vec())
        };
        let (gx1, gw1) = build();
        let (gx2, gw2) = build();
        assert_eq!(
            gx1.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
            gx2.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            gw1.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
            gw2.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn concat_axis1_backward_routes_gradients() {
        let mut t = Tape::new();
        let a = t.param(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]);
        let b = t.param(vec![5.0, 6.0], vec![2, 1]);
        let cat = t.concatenate(&[a, b], 1);
        assert_eq!(t.values(cat), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let w = t.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![2, 3]);
        let prod = t.multiply(cat, w);
        let loss = t.sum(prod);
        t.backward(loss);
        assert_eq!(t.grad(a), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(t.grad(b), &[3.0, 6.0]);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut params = vec![vec![1.0, -2.0]];
        let grads = vec![vec![0.0, 0.0]];
        let mut state = AdamState::new(1e-3, &[2]);
        adam_step(&mut state, &mut params, &grads);
        assert_eq!(params[0], vec![1.0, -2.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut params = vec![vec![0.5, -0.5]];
        let grads = vec![vec![0.3, -1.7]];
        let mut state = AdamState::new(1e-3, &[2]);
        adam_step(&mut state, &mut params, &grads);
        assert_relative_eq!(params[0][0], 0.5 - 1e-3, epsilon = 1e-9);
        assert_relative_eq!(params[0][1], -0.5 + 1e-3, epsilon = 1e-9);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        let mut params = vec![vec![1.0]];
        let mut state = AdamState::new(1e-2, &[1]);
        for _ in 0..1000 {
            let grads = vec![vec![2.0 * params[0][0]]];
            adam_step(&mut state, &mut params, &grads);
        }
        assert!(params[0][0].abs() < 1e-3, "x = {}", params[0][0]);
    }
}
