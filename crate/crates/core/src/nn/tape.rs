//! Reverse-mode differentiation over a recorded sequence of vector ops.
//!
//! A [`Tape`] is built fresh for every loss evaluation (one sequence, one
//! window). Parameters enter as leaves, data as constants; recurrent models
//! simply keep appending steps, so backpropagation through time falls out of
//! the reverse sweep. Only leaf gradients are kept after [`Tape::backward`].

use super::layers::{dense_forward, lstm_forward, Activation, Dense, LstmCell, LstmWeights};
use super::matrix::{axpy, matvec_into, matvec_t_acc, outer_acc, Matrix};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatVec { w: Var, x: Var, cols: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Slice { src: Var, start: usize },
    Dense {
        x: Var,
        w: Var,
        b: Var,
        activation: Activation,
        pre: Vec<f64>,
    },
    Lstm {
        x: Var,
        state: Var,
        w: Var,
        u: Var,
        b: Var,
        gates: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    Reparam { mean: Var, var: Var, eps: Vec<f64> },
    GaussianNll { x: Vec<f64>, mean: Var, var: Var },
    KlNormal { mean: Var, var: Var, prior: Vec<f64> },
    SquaredError { pred: Var, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf handles for a bound [`Dense`] layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

/// Leaf handles for a bound [`LstmCell`].
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub input_weight: Var,
    pub recurrent_weight: Var,
    pub bias: Var,
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

    fn push(&mut self, value: Vec<f64>, op: Op, parents: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            _ => parents.iter().any(|p| self.nodes[p.0].requires_grad),
        };
        let rows = value.len();
        self.nodes.push(Node {
            value,
            rows,
            cols: 1,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf holding a copy of `m`.
    pub fn leaf(&mut self, m: &Matrix) -> Var {
        let v = self.push(m.as_slice().to_vec(), Op::Leaf, &[]);
        self.nodes[v.0].rows = m.rows();
        self.nodes[v.0].cols = m.cols();
        v
    }

    /// Trainable column-vector leaf.
    pub fn leaf_vector(&mut self, v: &[f64]) -> Var {
        self.push(v.to_vec(), Op::Leaf, &[])
    }

    /// Non-trainable input; no gradient is propagated into it.
    pub fn constant(&mut self, v: &[f64]) -> Var {
        self.push(v.to_vec(), Op::Constant, &[])
    }

    pub fn bind_dense(&mut self, layer: &Dense) -> DenseVars {
        DenseVars {
            weight: self.leaf(&layer.weight),
            bias: self.leaf(&layer.bias),
            activation: layer.activation,
        }
    }

    pub fn bind_lstm(&mut self, cell: &LstmCell) -> LstmVars {
        LstmVars {
            input_weight: self.leaf(&cell.input_weight),
            recurrent_weight: self.leaf(&cell.recurrent_weight),
            bias: self.leaf(&cell.bias),
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.value(v) {
            [s] => Ok(*s),
            other => Err(Error::Contract(format!(
                "expected a scalar node, found length {}",
                other.len()
            ))),
        }
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn same_len(&self, a: Var, b: Var) -> Result<usize> {
        let n = self.value(a).len();
        check_dim("elementwise operand", n, self.value(b).len())?;
        Ok(n)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(w);
        check_dim("matvec input", cols, self.value(x).len())?;
        let mut out = vec![0.0; rows];
        matvec_into(self.value(w), rows, cols, self.value(x), &mut out);
        Ok(self.push(out, Op::MatVec { w, x, cols }, &[w, x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * k).collect();
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], Op::Sum(a), &[a])
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(src).len();
        if start + len > n {
            return Err(Error::dim("slice bounds", n, start + len));
        }
        let out = self.value(src)[start..start + len].to_vec();
        Ok(self.push(out, Op::Slice { src, start }, &[src]))
    }

    /// `act(W x + b)` as one node.
    pub fn dense(&mut self, layer: DenseVars, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(layer.weight);
        check_dim("dense input", cols, self.value(x).len())?;
        check_dim("dense bias", rows, self.value(layer.bias).len())?;
        let mut pre = vec![0.0; rows];
        let mut out = vec![0.0; rows];
        dense_forward(
            self.value(layer.weight),
            self.value(layer.bias),
            cols,
            layer.activation,
            self.value(x),
            &mut pre,
            &mut out,
        );
        let op = Op::Dense {
            x,
            w: layer.weight,
            b: layer.bias,
            activation: layer.activation,
            pre,
        };
        Ok(self.push(out, op, &[x, layer.weight, layer.bias]))
    }

    /// One LSTM step. `state` is the packed `[h; c]` vector of length `2H`;
    /// the result is the next packed state.
    pub fn lstm(&mut self, cell: LstmVars, x: Var, state: Var) -> Result<Var> {
        let (rows, input) = self.shape(cell.input_weight);
        let hidden = rows / 4;
        check_dim("lstm input", input, self.value(x).len())?;
        check_dim("lstm state", 2 * hidden, self.value(state).len())?;
        let mut gates = vec![0.0; 4 * hidden];
        let mut out = vec![0.0; 2 * hidden];
        let mut tanh_c = vec![0.0; hidden];
        {
            let s = self.value(state);
            lstm_forward(
                LstmWeights {
                    input: self.value(cell.input_weight),
                    recurrent: self.value(cell.recurrent_weight),
                    bias: self.value(cell.bias),
                    input_size: input,
                    hidden,
                },
                self.value(x),
                &s[..hidden],
                &s[hidden..],
                &mut gates,
                &mut out,
                &mut tanh_c,
            );
        }
        let op = Op::Lstm {
            x,
            state,
            w: cell.input_weight,
            u: cell.recurrent_weight,
            b: cell.bias,
            gates,
            tanh_c,
        };
        Ok(self.push(
            out,
            op,
            &[x, state, cell.input_weight, cell.recurrent_weight, cell.bias],
        ))
    }

    /// Reparameterized draw `mean + sqrt(var) * eps` with `eps` held fixed.
    pub fn reparam(&mut self, mean: Var, var: Var, eps: &[f64]) -> Result<Var> {
        let n = self.same_len(mean, var)?;
        check_dim("reparameterization noise", n, eps.len())?;
        let out = self
            .value(mean)
            .iter()
            .zip(self.value(var))
            .zip(eps)
            .map(|((m, v), e)| m + v.sqrt() * e)
            .collect();
        let op = Op::Reparam {
            mean,
            var,
            eps: eps.to_vec(),
        };
        Ok(self.push(out, op, &[mean, var]))
    }

    /// Negative log-likelihood of `x` under `N(mean, diag(var))`.
    pub fn gaussian_nll(&mut self, x: &[f64], mean: Var, var: Var) -> Result<Var> {
        let n = self.same_len(mean, var)?;
        check_dim("likelihood target", n, x.len())?;
        let value = crate::model::loss::gaussian_nll_raw(x, self.value(mean), self.value(var))?;
        let op = Op::GaussianNll {
            x: x.to_vec(),
            mean,
            var,
        };
        Ok(self.push(vec![value], op, &[mean, var]))
    }

    /// `KL(N(mean, diag(var)) || N(prior, I))`.
    pub fn kl_normal(&mut self, mean: Var, var: Var, prior: &[f64]) -> Result<Var> {
        let n = self.same_len(mean, var)?;
        check_dim("prior mean", n, prior.len())?;
        let value = crate::model::loss::kl_raw(self.value(mean), self.value(var), prior)?;
        let op = Op::KlNormal {
            mean,
            var,
            prior: prior.to_vec(),
        };
        Ok(self.push(vec![value], op, &[mean, var]))
    }

    /// `sum((pred - target)^2)`.
    pub fn squared_error(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        check_dim("squared error target", self.value(pred).len(), target.len())?;
        let value = self
            .value(pred)
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let op = Op::SquaredError {
            pred,
            target: target.to_vec(),
        };
        Ok(self.push(vec![value], op, &[pred]))
    }

    /// Gradients of the scalar `loss` with respect to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let n_loss = self.value(loss).len();
        if n_loss != 1 {
            return Err(Error::Contract(format!(
                "gradient requires a scalar loss, found length {n_loss}"
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if grads[idx].is_empty() || !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            self.propagate(idx, &g, &mut grads);
        }
        // only leaves keep their gradient
        for (idx, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[idx].op, Op::Leaf) {
                g.clear();
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatVec { w, x, cols } => {
                if self.wants(*w) {
                    outer_acc(g, self.value(*x), acc(grads, *w, self.value(*w).len()));
                }
                if self.wants(*x) {
                    matvec_t_acc(self.value(*w), *cols, g, acc(grads, *x, *cols));
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        axpy(1.0, g, acc(grads, *v, g.len()));
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    axpy(1.0, g, acc(grads, *a, g.len()));
                }
                if self.wants(*b) {
                    axpy(-1.0, g, acc(grads, *b, g.len()));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let vb = self.value(*b);
                    let ga = acc(grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * vb[k];
                    }
                }
                if self.wants(*b) {
                    let va = self.value(*a);
                    let gb = acc(grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] += g[k] * va[k];
                    }
                }
            }
            Op::Scale(a, k) => {
                if self.wants(*a) {
                    axpy(*k, g, acc(grads, *a, g.len()));
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let n = self.value(*a).len();
                    acc(grads, *a, n).iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::Slice { src, start } => {
                if self.wants(*src) {
                    let n = self.value(*src).len();
                    let gs = acc(grads, *src, n);
                    axpy(1.0, g, &mut gs[*start..*start + g.len()]);
                }
            }
            Op::Dense {
                x,
                w,
                b,
                activation,
                pre,
            } => {
                let dpre: Vec<f64> = g
                    .iter()
                    .zip(pre)
                    .zip(&node.value)
                    .map(|((gi, u), y)| gi * activation.derivative(*u, *y))
                    .collect();
                let cols = self.shape(*w).1;
                if self.wants(*w) {
                    outer_acc(&dpre, self.value(*x), acc(grads, *w, self.value(*w).len()));
                }
                if self.wants(*b) {
                    axpy(1.0, &dpre, acc(grads, *b, dpre.len()));
                }
                if self.wants(*x) {
                    matvec_t_acc(self.value(*w), cols, &dpre, acc(grads, *x, cols));
                }
            }
            Op::Lstm {
                x,
                state,
                w,
                u,
                b,
                gates,
                tanh_c,
            } => self.lstm_backward(g, grads, [*x, *state, *w, *u, *b], gates, tanh_c),
            Op::Reparam { mean, var, eps } => {
                if self.wants(*mean) {
                    axpy(1.0, g, acc(grads, *mean, g.len()));
                }
                if self.wants(*var) {
                    let vv = self.value(*var);
                    let gv = acc(grads, *var, g.len());
                    for k in 0..g.len() {
                        gv[k] += g[k] * eps[k] / (2.0 * vv[k].sqrt());
                    }
                }
            }
            Op::GaussianNll { x, mean, var } => {
                let (m, v) = (self.value(*mean), self.value(*var));
                if self.wants(*mean) {
                    let gm = acc(grads, *mean, m.len());
                    for k in 0..m.len() {
                        gm[k] += g[0] * (m[k] - x[k]) / v[k];
                    }
                }
                if self.wants(*var) {
                    let gv = acc(grads, *var, v.len());
                    for k in 0..v.len() {
                        let r = x[k] - m[k];
                        gv[k] += g[0] * 0.5 * (1.0 / v[k] - r * r / (v[k] * v[k]));
                    }
                }
            }
            Op::KlNormal { mean, var, prior } => {
                let (m, v) = (self.value(*mean), self.value(*var));
                if self.wants(*mean) {
                    let gm = acc(grads, *mean, m.len());
                    for k in 0..m.len() {
                        gm[k] += g[0] * (m[k] - prior[k]);
                    }
                }
                if self.wants(*var) {
                    let gv = acc(grads, *var, v.len());
                    for k in 0..v.len() {
                        gv[k] += g[0] * 0.5 * (1.0 - 1.0 / v[k]);
                    }
                }
            }
            Op::SquaredError { pred, target } => {
                if self.wants(*pred) {
                    let p = self.value(*pred);
                    let gp = acc(grads, *pred, p.len());
                    for k in 0..p.len() {
                        gp[k] += g[0] * 2.0 * (p[k] - target[k]);
                    }
                }
            }
        }
    }

    fn lstm_backward(
        &self,
        g: &[f64],
        grads: &mut [Vec<f64>],
        [x, state, w, u, b]: [Var; 5],
        gates: &[f64],
        tanh_c: &[f64],
    ) {
        let hidden = tanh_c.len();
        let prev = self.value(state);
        let (h_prev, c_prev) = prev.split_at(hidden);
        let (i_g, rest) = gates.split_at(hidden);
        let (f_g, rest) = rest.split_at(hidden);
        let (g_g, o_g) = rest.split_at(hidden);
        let (dh, dc_next) = g.split_at(hidden);

        let mut dpre = vec![0.0; 4 * hidden];
        let mut dc_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let dc = dc_next[k] + dh[k] * o_g[k] * (1.0 - tanh_c[k] * tanh_c[k]);
            let d_o = dh[k] * tanh_c[k];
            let d_i = dc * g_g[k];
            let d_g = dc * i_g[k];
            let d_f = dc * c_prev[k];
            dc_prev[k] = dc * f_g[k];
            dpre[k] = d_i * i_g[k] * (1.0 - i_g[k]);
            dpre[hidden + k] = d_f * f_g[k] * (1.0 - f_g[k]);
            dpre[2 * hidden + k] = d_g * (1.0 - g_g[k] * g_g[k]);
            dpre[3 * hidden + k] = d_o * o_g[k] * (1.0 - o_g[k]);
        }

        let input = self.shape(w).1;
        if self.wants(w) {
            outer_acc(&dpre, self.value(x), acc(grads, w, self.value(w).len()));
        }
        if self.wants(u) {
            outer_acc(&dpre, h_prev, acc(grads, u, self.value(u).len()));
        }
        if self.wants(b) {
            axpy(1.0, &dpre, acc(grads, b, dpre.len()));
        }
        if self.wants(x) {
            matvec_t_acc(self.value(w), input, &dpre, acc(grads, x, input));
        }
        if self.wants(state) {
            let gs = acc(grads, state, 2 * hidden);
            let (gh, gc) = gs.split_at_mut(hidden);
            matvec_t_acc(self.value(u), hidden, &dpre, gh);
            axpy(1.0, &dc_prev, gc);
        }
    }
}

fn acc(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let slot = &mut grads[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; len];
    }
    slot
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads
            .get(v.0)
            .filter(|g| !g.is_empty())
            .map(|g| g.as_slice())
    }

    /// Gradient for `v` shaped like `like`; zeros when unreached.
    pub fn matrix(&self, v: Var, like: &Matrix) -> Matrix {
        match self.get(v) {
            Some(g) => Matrix::from_vec(like.rows(), like.cols(), g.to_vec())
                .expect("leaf gradient has the leaf's shape"),
            None => Matrix::zeros(like.rows(), like.cols()),
        }
    }

    pub fn dense(&self, vars: &DenseVars, layer: &Dense) -> [Matrix; 2] {
        [
            self.matrix(vars.weight, &layer.weight),
            self.matrix(vars.bias, &layer.bias),
        ]
    }

    pub fn lstm(&self, vars: &LstmVars, cell: &LstmCell) -> [Matrix; 3] {
        [
            self.matrix(vars.input_weight, &cell.input_weight),
            self.matrix(vars.recurrent_weight, &cell.recurrent_weight),
            self.matrix(vars.bias, &cell.bias),
        ]
    }
}
