//! Minimal reverse-mode automatic differentiation on dense f64 matrices.
//!
//! A `Tape` records every operation; `backward` walks the record in reverse
//! and accumulates gradients. The op set is exactly what the graph policy
//! needs: affine maps, elementwise nonlinearities, row gather/scatter for
//! message passing and pooling, concatenation, and a numerically stable
//! log-softmax. Everything is f64 so finite-difference checks hold tightly.

use rand::Rng;

/// Dense row-major matrix. Vectors are 1xN or Nx1 matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn row_vec(data: Vec<f64>) -> Tensor {
        Tensor { rows: 1, cols: data.len(), data }
    }

    /// Uniform init in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        Tensor { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar");
        self.data[0]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Handle to a tape entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes the gradient list from `backward`.
    pub fn index(&self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Neg(Var),
    Square(Var),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    GatherElems(Var, Vec<(usize, usize)>),
    SumAll(Var),
    SumRows(Var),
    Row(Var, usize),
    LogSoftmax1d(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Computation record. Build values through the methods, then call
/// `backward` on a scalar to populate gradients.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// New leaf. Gradients are available for every leaf after `backward`.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.push(Tensor::scalar(v), Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.rows, "matmul shape mismatch");
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let aip = ta.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += aip * tb.data[p * n + j];
                }
            }
        }
        self.push(out, Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let t = Tensor { rows: ta.rows, cols: ta.cols, data };
        self.push(t, Op::Add(a, b))
    }

    /// Broadcast a 1xC row over every row of an RxC matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Var {
        let (tm, tr) = (&self.nodes[m.0].value, &self.nodes[row.0].value);
        assert!(tr.rows == 1 && tr.cols == tm.cols, "add_row shape mismatch");
        let mut out = tm.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] += tr.data[c];
            }
        }
        self.push(out, Op::AddRow(m, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let t = Tensor { rows: ta.rows, cols: ta.cols, data };
        self.push(t, Op::Mul(a, b))
    }

    /// Scale each row of an RxC matrix by the matching entry of an Rx1
    /// column: out[r,c] = m[r,c] * col[r].
    pub fn mul_col(&mut self, m: Var, col: Var) -> Var {
        let (tm, tc) = (&self.nodes[m.0].value, &self.nodes[col.0].value);
        assert!(tc.cols == 1 && tc.rows == tm.rows, "mul_col shape mismatch");
        let mut out = tm.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] *= tc.data[r];
            }
        }
        self.push(out, Op::MulCol(m, col))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| x * k).collect() };
        self.push(t, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| x + k).collect() };
        self.push(t, Op::AddConst(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| -x).collect() };
        self.push(t, Op::Neg(a))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| x * x).collect() };
        self.push(t, Op::Square(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| x.exp()).collect() };
        self.push(t, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| x.ln()).collect() };
        self.push(t, Op::Ln(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor { rows: ta.rows, cols: ta.cols, data: ta.data.iter().map(|x| 1.0 / x).collect() };
        self.push(t, Op::Recip(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|&x| if x >= 0.0 { x } else { slope * x }).collect();
        let t = Tensor { rows: ta.rows, cols: ta.cols, data };
        self.push(t, Op::LeakyRelu(a, slope))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.rows, tb.rows, "concat_cols row mismatch");
        let (r, ca, cb) = (ta.rows, ta.cols, tb.cols);
        let mut out = Tensor::zeros(r, ca + cb);
        for i in 0..r {
            out.data[i * (ca + cb)..i * (ca + cb) + ca].copy_from_slice(&ta.data[i * ca..(i + 1) * ca]);
            out.data[i * (ca + cb) + ca..(i + 1) * (ca + cb)].copy_from_slice(&tb.data[i * cb..(i + 1) * cb]);
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.cols, "concat_rows col mismatch");
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        let t = Tensor { rows: ta.rows + tb.rows, cols: ta.cols, data };
        self.push(t, Op::ConcatRows(a, b))
    }

    /// out[i] = a[idx[i]]; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let ta = &self.nodes[a.0].value;
        let c = ta.cols;
        let mut out = Tensor::zeros(idx.len(), c);
        for (i, &r) in idx.iter().enumerate() {
            out.data[i * c..(i + 1) * c].copy_from_slice(&ta.data[r * c..(r + 1) * c]);
        }
        self.push(out, Op::GatherRows(a, idx.to_vec()))
    }

    /// out has `out_rows` rows; out[idx[i]] += a[i]. Used for segment sums
    /// (neighborhood aggregation, graph pooling).
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], out_rows: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.rows, idx.len(), "scatter_add index count mismatch");
        let c = ta.cols;
        let mut out = Tensor::zeros(out_rows, c);
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < out_rows, "scatter_add index out of range");
            for j in 0..c {
                out.data[r * c + j] += ta.data[i * c + j];
            }
        }
        self.push(out, Op::ScatterAddRows(a, idx.to_vec()))
    }

    /// 1xK row assembled from arbitrary (row, col) positions of `a`.
    pub fn gather_elems(&mut self, a: Var, idx: &[(usize, usize)]) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = idx.iter().map(|&(r, c)| ta.get(r, c)).collect();
        let t = Tensor::row_vec(data);
        self.push(t, Op::GatherElems(a, idx.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::scalar(ta.data.iter().sum());
        self.push(t, Op::SumAll(a))
    }

    /// Column vector of per-row sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let mut out = Tensor::zeros(ta.rows, 1);
        for r in 0..ta.rows {
            out.data[r] = ta.data[r * ta.cols..(r + 1) * ta.cols].iter().sum();
        }
        self.push(out, Op::SumRows(a))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::row_vec(ta.data[i * ta.cols..(i + 1) * ta.cols].to_vec());
        self.push(t, Op::Row(a, i))
    }

    /// Numerically stable log-softmax over a 1xN row. The max shift cancels
    /// exactly in the softmax gradient, so treating it as constant is exact.
    pub fn log_softmax_1d(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.rows, 1, "log_softmax_1d wants a row vector");
        let max = ta.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + ta.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let t = Tensor::row_vec(ta.data.iter().map(|x| x - lse).collect());
        self.push(t, Op::LogSoftmax1d(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse pass from a scalar output. Returns one gradient slot per tape
    /// entry; read the slots for your input Vars.
    pub fn backward(&self, loss: Var) -> Vec<Tensor> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward starts from a scalar");
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows, n.value.cols))
            .collect();
        grads[loss.0].data[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if grads[i].data.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[i].clone();
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                    // dA = g . B^T
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g.data[r * n + j] * tb.data[p * n + j];
                            }
                            grads[a.0].data[r * k + p] += acc;
                        }
                    }
                    // dB = A^T . g
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for r in 0..m {
                                acc += ta.data[r * k + p] * g.data[r * n + j];
                            }
                            grads[b.0].data[p * n + j] += acc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (slot, &gv) in grads[a.0].data.iter_mut().zip(&g.data) {
                        *slot += gv;
                    }
                    for (slot, &gv) in grads[b.0].data.iter_mut().zip(&g.data) {
                        *slot += gv;
                    }
                }
                Op::AddRow(m, row) => {
                    for (slot, &gv) in grads[m.0].data.iter_mut().zip(&g.data) {
                        *slot += gv;
                    }
                    let cols = g.cols;
                    for r in 0..g.rows {
                        for c in 0..cols {
                            grads[row.0].data[c] += g.data[r * cols + c];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.nodes[a.0].value.clone(), self.nodes[b.0].value.clone());
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv * tb.data[i2];
                        grads[b.0].data[i2] += gv * ta.data[i2];
                    }
                }
                Op::MulCol(m, col) => {
                    let (tm, tc) = (self.nodes[m.0].value.clone(), self.nodes[col.0].value.clone());
                    let cols = g.cols;
                    for r in 0..g.rows {
                        let mut dot = 0.0;
                        for c in 0..cols {
                            let gv = g.data[r * cols + c];
                            grads[m.0].data[r * cols + c] += gv * tc.data[r];
                            dot += gv * tm.data[r * cols + c];
                        }
                        grads[col.0].data[r] += dot;
                    }
                }
                Op::Scale(a, k) => {
                    for (slot, &gv) in grads[a.0].data.iter_mut().zip(&g.data) {
                        *slot += gv * k;
                    }
                }
                Op::AddConst(a) => {
                    for (slot, &gv) in grads[a.0].data.iter_mut().zip(&g.data) {
                        *slot += gv;
                    }
                }
                Op::Neg(a) => {
                    for (slot, &gv) in grads[a.0].data.iter_mut().zip(&g.data) {
                        *slot -= gv;
                    }
                }
                Op::Square(a) => {
                    let ta = self.nodes[a.0].value.clone();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv * 2.0 * ta.data[i2];
                    }
                }
                Op::Exp(a) => {
                    let out = self.nodes[i].value.clone();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv * out.data[i2];
                    }
                }
                Op::Ln(a) => {
                    let ta = self.nodes[a.0].value.clone();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv / ta.data[i2];
                    }
                }
                Op::Recip(a) => {
                    let ta = self.nodes[a.0].value.clone();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        let x = ta.data[i2];
                        grads[a.0].data[i2] -= gv / (x * x);
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let ta = self.nodes[a.0].value.clone();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv * if ta.data[i2] >= 0.0 { 1.0 } else { *slope };
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.nodes[a.0].value.cols, self.nodes[b.0].value.cols);
                    for r in 0..g.rows {
                        for c in 0..ca {
                            grads[a.0].data[r * ca + c] += g.data[r * (ca + cb) + c];
                        }
                        for c in 0..cb {
                            grads[b.0].data[r * cb + c] += g.data[r * (ca + cb) + ca + c];
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let na = self.nodes[a.0].value.len();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        if i2 < na {
                            grads[a.0].data[i2] += gv;
                        } else {
                            grads[b.0].data[i2 - na] += gv;
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    let c = g.cols;
                    for (i2, &r) in idx.iter().enumerate() {
                        for j in 0..c {
                            grads[a.0].data[r * c + j] += g.data[i2 * c + j];
                        }
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    let c = g.cols;
                    for (i2, &r) in idx.iter().enumerate() {
                        for j in 0..c {
                            grads[a.0].data[i2 * c + j] += g.data[r * c + j];
                        }
                    }
                }
                Op::GatherElems(a, idx) => {
                    let cols = self.nodes[a.0].value.cols;
                    for (i2, &(r, c)) in idx.iter().enumerate() {
                        grads[a.0].data[r * cols + c] += g.data[i2];
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.data[0];
                    for slot in grads[a.0].data.iter_mut() {
                        *slot += gv;
                    }
                }
                Op::SumRows(a) => {
                    let cols = self.nodes[a.0].value.cols;
                    for r in 0..g.rows {
                        for c in 0..cols {
                            grads[a.0].data[r * cols + c] += g.data[r];
                        }
                    }
                }
                Op::Row(a, r) => {
                    let cols = g.cols;
                    for c in 0..cols {
                        grads[a.0].data[r * cols + c] += g.data[c];
                    }
                }
                Op::LogSoftmax1d(a) => {
                    let out = self.nodes[i].value.clone();
                    let gsum: f64 = g.data.iter().sum();
                    for (i2, &gv) in g.data.iter().enumerate() {
                        grads[a.0].data[i2] += gv - out.data[i2].exp() * gsum;
                    }
                }
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences on every input coordinate, compared
    /// against the tape's reverse-mode gradients.
    fn gradcheck(
        inputs: &[Tensor],
        f: &dyn Fn(&mut Tape, &[Var]) -> Var,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        assert_eq!(tape.value(loss).len(), 1);
        let grads = tape.backward(loss);

        let h = 1e-5;
        for (k, t) in inputs.iter().enumerate() {
            for j in 0..t.len() {
                let eval = |delta: f64| -> f64 {
                    let mut bumped: Vec<Tensor> = inputs.to_vec();
                    bumped[k].data[j] += delta;
                    let mut tp = Tape::new();
                    let vs: Vec<Var> = bumped.into_iter().map(|t| tp.input(t)).collect();
                    let l = f(&mut tp, &vs);
                    tp.value(l).item()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[vars[k].0].data[j];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "input {k} coord {j}: fd={fd} analytic={an}"
                );
            }
        }
    }

    fn randt(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn matmul_values() {
        let mut t = Tape::new();
        let a = t.input(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = t.input(Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
        let c = t.matmul(a, b);
        assert_eq!(t.value(c).data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![randt(3, 4, &mut rng), randt(4, 2, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let m = t.matmul(v[0], v[1]);
            let s = t.square(m);
            t.sum(s)
        }, 1e-6);
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = vec![randt(2, 3, &mut rng), randt(2, 3, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let m = t.mul(v[0], v[1]);
            let a = t.add(m, v[0]);
            let sc = t.scale(a, 1.7);
            let n = t.neg(sc);
            let q = t.square(n);
            t.sum(q)
        }, 1e-6);
    }

    #[test]
    fn exp_ln_recip_gradients() {
        // Keep inputs positive and away from zero for ln and recip.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..2.0)).collect();
        let inputs = vec![Tensor::from_vec(2, 3, data)];
        gradcheck(&inputs, &|t, v| {
            let e = t.exp(v[0]);
            let l = t.ln(e);
            let r = t.recip(l);
            let c = t.add_const(r, 0.3);
            t.sum(c)
        }, 1e-6);
    }

    #[test]
    fn leaky_relu_gradient() {
        // Offset inputs away from the kink so finite differences are clean.
        let inputs = vec![Tensor::from_vec(1, 4, vec![-1.5, -0.3, 0.4, 2.0])];
        gradcheck(&inputs, &|t, v| {
            let r = t.leaky_relu(v[0], 0.01);
            let s = t.square(r);
            t.sum(s)
        }, 1e-6);
    }

    #[test]
    fn broadcast_and_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs = vec![randt(3, 2, &mut rng), randt(1, 2, &mut rng), randt(3, 2, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let b = t.add_row(v[0], v[1]);
            let cc = t.concat_cols(b, v[2]);
            let cr = t.concat_rows(cc, cc);
            let s = t.square(cr);
            t.sum(s)
        }, 1e-6);
    }

    #[test]
    fn gather_scatter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs = vec![randt(4, 3, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            // Repeated indices exercise accumulation on both paths.
            let g = t.gather_rows(v[0], &[0, 2, 2, 3, 1]);
            let s = t.scatter_add_rows(g, &[1, 0, 1, 1, 0], 2);
            let e = t.gather_elems(s, &[(0, 0), (1, 2), (0, 1)]);
            let q = t.square(e);
            t.sum(q)
        }, 1e-6);
    }

    #[test]
    fn mul_col_values_and_gradients() {
        let mut t = Tape::new();
        let m = t.input(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let c = t.input(Tensor::from_vec(2, 1, vec![10.0, -1.0]));
        let o = t.mul_col(m, c);
        assert_eq!(t.value(o).data, vec![10.0, 20.0, 30.0, -4.0, -5.0, -6.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inputs = vec![randt(3, 4, &mut rng), randt(3, 1, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let o = t.mul_col(v[0], v[1]);
            let q = t.square(o);
            t.sum(q)
        }, 1e-6);
    }

    #[test]
    fn row_and_sum_rows_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inputs = vec![randt(3, 4, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let r = t.row(v[0], 1);
            let sr = t.sum_rows(v[0]);
            let s1 = t.sum(r);
            let s2 = t.sum(sr);
            let m = t.mul(s1, s2);
            t.mean(m)
        }, 1e-6);
    }

    #[test]
    fn log_softmax_values_and_gradient() {
        let mut t = Tape::new();
        let a = t.input(Tensor::row_vec(vec![1.0, 2.0, 3.0]));
        let ls = t.log_softmax_1d(a);
        let probs: f64 = t.value(ls).data.iter().map(|x| x.exp()).sum();
        assert!((probs - 1.0).abs() < 1e-12);

        // Large magnitudes must not overflow.
        let mut t2 = Tape::new();
        let b = t2.input(Tensor::row_vec(vec![1000.0, 1001.0, 999.0]));
        let ls2 = t2.log_softmax_1d(b);
        assert!(t2.value(ls2).data.iter().all(|x| x.is_finite()));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inputs = vec![randt(1, 5, &mut rng)];
        gradcheck(&inputs, &|t, v| {
            let ls = t.log_softmax_1d(v[0]);
            // Weighted combination so the gradient is not uniform.
            let w = t.input(Tensor::row_vec(vec![0.9, -0.3, 0.5, 0.0, 1.2]));
            let m = t.mul(ls, w);
            t.sum(m)
        }, 1e-6);
    }

    #[test]
    fn mlp_composite_gradient() {
        // Two-layer MLP with log-softmax head: the shape the policy uses.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs = vec![
            randt(1, 4, &mut rng),  // x
            randt(4, 8, &mut rng),  // W1
            randt(1, 8, &mut rng),  // b1
            randt(8, 3, &mut rng),  // W2
            randt(1, 3, &mut rng),  // b2
        ];
        gradcheck(&inputs, &|t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add(h, v[2]);
            let h = t.leaky_relu(h, 0.01);
            let o = t.matmul(h, v[3]);
            let o = t.add(o, v[4]);
            let ls = t.log_softmax_1d(o);
            let picked = t.gather_elems(ls, &[(0, 1)]);
            t.neg(picked)
        }, 1e-5);
    }

    #[test]
    fn unused_inputs_get_zero_gradient() {
        let mut t = Tape::new();
        let a = t.input(Tensor::scalar(2.0));
        let b = t.input(Tensor::scalar(5.0));
        let l = t.square(a);
        let grads = t.backward(l);
        assert_eq!(grads[a.0].data[0], 4.0);
        assert_eq!(grads[b.0].data[0], 0.0);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = Tensor::glorot(10, 20, &mut rng);
        let limit = (6.0 / 30.0f64).sqrt();
        assert!(t.data.iter().all(|x| x.abs() <= limit));
        assert!(t.data.iter().any(|x| x.abs() > limit * 0.1));
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_panics() {
        let mut t = Tape::new();
        let a = t.input(Tensor::zeros(2, 3));
        let b = t.input(Tensor::zeros(2, 3));
        t.matmul(a, b);
    }
}
