use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, matvec_into, Matrix};
use crate::error::{check_dim, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::Tanh => u.tanh(),
            Activation::Softplus => softplus(u),
        }
    }

    /// Derivative expressed through the pre-activation `u` and output `y`.
    #[inline]
    pub fn derivative(self, u: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Softplus => sigmoid(u),
        }
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow; floored at the smallest positive normal
/// so the result stays strictly positive even where `e^u` underflows.
#[inline]
pub fn softplus(u: f64) -> f64 {
    let y = if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    };
    y.max(f64::MIN_POSITIVE)
}

/// Anything holding trainable matrices. The order of `tensors` and
/// `tensors_mut` must agree; optimizers and checkpoints rely on it.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape by construction")
}

/// Fully connected layer `act(W x + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            weight: uniform_matrix(output, input, bound, rng),
            bias: Matrix::zeros(output, 1),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(output, 1),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("dense input", self.input_size(), x.len())?;
        let mut pre = vec![0.0; self.output_size()];
        let mut out = vec![0.0; self.output_size()];
        self.forward_into(x, &mut pre, &mut out);
        Ok(out)
    }

    pub(crate) fn forward_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        dense_forward(
            self.weight.as_slice(),
            self.bias.as_slice(),
            self.input_size(),
            self.activation,
            x,
            pre,
            out,
        );
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Standard LSTM cell. The stacked pre-activation has four blocks of `hidden`
/// rows in the order input gate, forget gate, candidate, output gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `4H x I`
    pub input_weight: Matrix,
    /// `4H x H`
    pub recurrent_weight: Matrix,
    /// `4H x 1`
    pub bias: Matrix,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let in_bound = 1.0 / (input.max(1) as f64).sqrt();
        let rec_bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut cell = Self {
            input_weight: uniform_matrix(4 * hidden, input, in_bound, rng),
            recurrent_weight: uniform_matrix(4 * hidden, hidden, rec_bound, rng),
            bias: Matrix::zeros(4 * hidden, 1),
        };
        cell.bias.as_mut_slice()[hidden..2 * hidden].fill(1.0);
        cell
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weight: Matrix::zeros(4 * hidden, input),
            recurrent_weight: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_weight.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weight.cols()
    }

    /// One step of the cell: returns the new `(h, c)`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let hidden = self.hidden_size();
        check_dim("lstm input", self.input_size(), x.len())?;
        check_dim("lstm hidden state", hidden, h_prev.len())?;
        check_dim("lstm cell state", hidden, c_prev.len())?;
        let mut gates = vec![0.0; 4 * hidden];
        let mut state = vec![0.0; 2 * hidden];
        let mut tanh_c = vec![0.0; hidden];
        self.forward_into(x, h_prev, c_prev, &mut gates, &mut state, &mut tanh_c);
        let c = state.split_off(hidden);
        Ok((state, c))
    }

    /// Writes activated gates, the packed `[h; c]` output and `tanh(c)`.
    pub(crate) fn forward_into(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        state: &mut [f64],
        tanh_c: &mut [f64],
    ) {
        lstm_forward(
            LstmWeights {
                input: self.input_weight.as_slice(),
                recurrent: self.recurrent_weight.as_slice(),
                bias: self.bias.as_slice(),
                input_size: self.input_size(),
                hidden: self.hidden_size(),
            },
            x,
            h_prev,
            c_prev,
            gates,
            state,
            tanh_c,
        );
    }
}

pub(crate) fn dense_forward(
    weight: &[f64],
    bias: &[f64],
    input: usize,
    activation: Activation,
    x: &[f64],
    pre: &mut [f64],
    out: &mut [f64],
) {
    matvec_into(weight, bias.len(), input, x, pre);
    for ((p, b), o) in pre.iter_mut().zip(bias).zip(out.iter_mut()) {
        *p += b;
        *o = activation.apply(*p);
    }
}

#[derive(Clone, Copy)]
pub(crate) struct LstmWeights<'a> {
    pub input: &'a [f64],
    pub recurrent: &'a [f64],
    pub bias: &'a [f64],
    pub input_size: usize,
    pub hidden: usize,
}

pub(crate) fn lstm_forward(
    p: LstmWeights<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    state: &mut [f64],
    tanh_c: &mut [f64],
) {
    let (hidden, input) = (p.hidden, p.input_size);
    for (r, g) in gates.iter_mut().enumerate() {
        *g = dot(&p.input[r * input..(r + 1) * input], x)
            + dot(&p.recurrent[r * hidden..(r + 1) * hidden], h_prev)
            + p.bias[r];
    }
    let (i_g, rest) = gates.split_at_mut(hidden);
    let (f_g, rest) = rest.split_at_mut(hidden);
    let (g_g, o_g) = rest.split_at_mut(hidden);
    let (h_out, c_out) = state.split_at_mut(hidden);
    for k in 0..hidden {
        i_g[k] = sigmoid(i_g[k]);
        f_g[k] = sigmoid(f_g[k]);
        g_g[k] = g_g[k].tanh();
        o_g[k] = sigmoid(o_g[k]);
        c_out[k] = f_g[k] * c_prev[k] + i_g[k] * g_g[k];
        tanh_c[k] = c_out[k].tanh();
        h_out[k] = o_g[k] * tanh_c[k];
    }
}

impl Parameters for LstmCell {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.input_weight, &self.recurrent_weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.input_weight,
            &mut self.recurrent_weight,
            &mut self.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lstm_gives_zero_state() {
        let cell = LstmCell::zeros(3, 4);
        let (h, c) = cell.step(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_gates_bound_hidden_state() {
        let mut cell = LstmCell::zeros(1, 1);
        let b = cell.bias.as_mut_slice();
        b[0] = 1e3;
        b[1] = 1e3;
        b[2] = 0.5f64.atanh();
        b[3] = 1e3;
        let (h, c) = cell.step(&[0.0], &[0.0], &[0.0]).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12);
        assert!((h[0] - 0.5f64.tanh()).abs() < 1e-12);
        assert!(h[0].abs() < 1.0);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = LstmCell::new(5, 3, &mut rng);
        assert_eq!(&cell.bias.as_slice()[3..6], &[1.0, 1.0, 1.0]);
        assert!(cell.bias.as_slice()[..3].iter().all(|v| *v == 0.0));
        let bound = 1.0 / 5f64.sqrt();
        assert!(cell.input_weight.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn lstm_shape_errors() {
        let cell = LstmCell::zeros(2, 3);
        assert!(cell.step(&[0.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(cell.step(&[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn dense_identity_and_activations() {
        let mut d = Dense::zeros(3, 3, Activation::Identity);
        d.weight = Matrix::identity(3);
        assert_eq!(d.forward(&[1.0, 2.0, -3.0]).unwrap(), vec![1.0, 2.0, -3.0]);

        let sp = Dense::zeros(2, 1, Activation::Softplus);
        assert!((sp.forward(&[5.0, 1.0]).unwrap()[0] - 0.693_147_180_559_945_3).abs() < 1e-15);
        let th = Dense::zeros(2, 1, Activation::Tanh);
        assert_eq!(th.forward(&[5.0, 1.0]).unwrap()[0], 0.0);
        assert!(th.forward(&[5.0]).is_err());
    }

    #[test]
    fn softplus_is_positive_and_finite() {
        for u in [-800.0, -700.0, -50.0, 0.0, 30.0, 700.0] {
            let y = softplus(u);
            assert!(y > 0.0 && y.is_finite(), "softplus({u}) = {y}");
        }
        assert!((softplus(700.0) - 700.0).abs() < 1e-9);
    }
}
