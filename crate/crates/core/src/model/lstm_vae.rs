use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::LstmVaeConfig;
use super::loss::{gaussian_nll_raw, kl_raw, DiagGaussian};
use super::prior::PriorSchedule;
use crate::error::{check_dim, Error, Result};
use crate::nn::layers::Parameters;
use crate::nn::{standard_normal, Activation, Dense, LstmCell, Matrix, Tape, Var};

/// Adds i.i.d. `N(0, noise_std^2)` corruption to `x`.
pub fn corrupt<R: Rng + ?Sized>(x: &[f64], noise_std: f64, rng: &mut R) -> Vec<f64> {
    if noise_std == 0.0 {
        return x.to_vec();
    }
    standard_normal(x.len(), rng)
        .into_iter()
        .zip(x)
        .map(|(e, xi)| xi + noise_std * e)
        .collect()
}

/// LSTM encoder with mean/variance heads feeding an LSTM decoder with
/// mean/variance heads. Means use identity heads, variances softplus heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmVae {
    pub config: LstmVaeConfig,
    pub encoder: LstmCell,
    pub encoder_mean: Dense,
    pub encoder_var: Dense,
    pub decoder: LstmCell,
    pub decoder_mean: Dense,
    pub decoder_var: Dense,
    pub prior: PriorSchedule,
}

/// Per-stream recurrent state. `Default` gives an uninitialized state that
/// must be [`LstmVae::reset`] before use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceState {
    inner: Option<Recurrent>,
}

#[derive(Clone, Debug, PartialEq)]
struct Recurrent {
    encoder: Vec<f64>,
    decoder: Vec<f64>,
    steps: usize,
}

impl SequenceState {
    pub fn is_initialized(&self) -> bool {
        self.inner.is_some()
    }

    /// Steps processed since the last reset.
    pub fn steps(&self) -> usize {
        self.inner.as_ref().map_or(0, |r| r.steps)
    }
}

/// Frozen noise for one sequence: input corruption (`T x D`) and latent
/// reparameterization draws (`T x K`).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceNoise {
    pub corruption: Matrix,
    pub latent: Matrix,
}

impl SequenceNoise {
    pub fn sample<R: Rng + ?Sized>(len: usize, input: usize, latent: usize, noise_std: f64, rng: &mut R) -> Self {
        let corruption = standard_normal(len * input, rng)
            .into_iter()
            .map(|e| e * noise_std)
            .collect();
        let latent_eps = standard_normal(len * latent, rng);
        Self {
            corruption: Matrix::from_vec(len, input, corruption).expect("shape"),
            latent: Matrix::from_vec(len, latent, latent_eps).expect("shape"),
        }
    }

    /// No corruption and `z = mean` at every step.
    pub fn deterministic(len: usize, input: usize, latent: usize) -> Self {
        Self {
            corruption: Matrix::zeros(len, input),
            latent: Matrix::zeros(len, latent),
        }
    }
}

/// Output of one encode/decode step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub posterior: DiagGaussian,
    pub reconstruction: DiagGaussian,
}

impl LstmVae {
    /// Fresh model with weights drawn from `config.seed`.
    pub fn new(config: LstmVaeConfig, sequence_len: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, sequence_len, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(config: LstmVaeConfig, sequence_len: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if config.input_dim == 0 {
            return Err(Error::Config("input_dim must be set before building a model".into()));
        }
        let (d, k) = (config.input_dim, config.latent_dim);
        let (he, hd) = (config.encoder_hidden, config.decoder_hidden);
        let prior = PriorSchedule::new(
            config.prior_start.resolve(k)?,
            config.prior_end.resolve(k)?,
            sequence_len,
        )?;
        Ok(Self {
            encoder: LstmCell::new(d, he, rng),
            encoder_mean: Dense::new(he, k, Activation::Identity, rng),
            encoder_var: Dense::new(he, k, Activation::Softplus, rng),
            decoder: LstmCell::new(k, hd, rng),
            decoder_mean: Dense::new(hd, d, Activation::Identity, rng),
            decoder_var: Dense::new(hd, d, Activation::Softplus, rng),
            prior,
            config,
        })
    }

    /// All-zero weights; handy for closed-form checks.
    pub fn zeros(config: LstmVaeConfig, sequence_len: usize) -> Result<Self> {
        let mut m = Self::new(config, sequence_len)?;
        for t in m.tensors_mut() {
            t.as_mut_slice().fill(0.0);
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_mean.output_size()
    }

    pub fn sequence_len(&self) -> usize {
        self.prior.length
    }

    pub fn reset(&self, state: &mut SequenceState) {
        state.inner = Some(Recurrent {
            encoder: vec![0.0; 2 * self.encoder.hidden_size()],
            decoder: vec![0.0; 2 * self.decoder.hidden_size()],
            steps: 0,
        });
    }

    pub fn initial_state(&self) -> SequenceState {
        let mut s = SequenceState::default();
        self.reset(&mut s);
        s
    }

    fn recurrent<'a>(&self, state: &'a mut SequenceState) -> Result<&'a mut Recurrent> {
        let r = state
            .inner
            .as_mut()
            .ok_or_else(|| Error::Contract("recurrent state used before reset".into()))?;
        if r.encoder.len() != 2 * self.encoder.hidden_size()
            || r.decoder.len() != 2 * self.decoder.hidden_size()
        {
            return Err(Error::Contract("recurrent state belongs to a different model".into()));
        }
        Ok(r)
    }

    /// Advances the encoder one step and returns the approximate posterior.
    pub fn encode_step(&self, x: &[f64], state: &mut SequenceState) -> Result<DiagGaussian> {
        check_dim("encoder input", self.input_dim(), x.len())?;
        let r = self.recurrent(state)?;
        let he = self.encoder.hidden_size();
        let next = step_cell(&self.encoder, x, &r.encoder);
        r.encoder = next;
        let h = &r.encoder[..he];
        Ok(DiagGaussian {
            mean: self.encoder_mean.forward(h)?,
            var: self.encoder_var.forward(h)?,
        })
    }

    /// Advances the decoder one step from latent `z`.
    pub fn decode_step(&self, z: &[f64], state: &mut SequenceState) -> Result<DiagGaussian> {
        check_dim("decoder input", self.latent_dim(), z.len())?;
        let r = self.recurrent(state)?;
        let hd = self.decoder.hidden_size();
        let next = step_cell(&self.decoder, z, &r.decoder);
        r.decoder = next;
        r.steps += 1;
        let h = &r.decoder[..hd];
        Ok(DiagGaussian {
            mean: self.decoder_mean.forward(h)?,
            var: self.decoder_var.forward(h)?,
        })
    }

    /// Test-time step: clean input, `z` = posterior mean.
    pub fn step(&self, x: &[f64], state: &mut SequenceState) -> Result<StepOutput> {
        let posterior = self.encode_step(x, state)?;
        let reconstruction = self.decode_step(&posterior.mean, state)?;
        Ok(StepOutput {
            posterior,
            reconstruction,
        })
    }

    /// Runs a whole sequence from a fresh state.
    pub fn run(&self, seq: &Matrix) -> Result<Vec<StepOutput>> {
        let mut state = self.initial_state();
        seq.iter_rows().map(|x| self.step(x, &mut state)).collect()
    }

    /// Negative denoising lower bound of `seq` summed over steps, evaluated
    /// without corruption and with `z` at the posterior mean.
    pub fn deterministic_loss(&self, seq: &Matrix) -> Result<f64> {
        self.check_sequence(seq)?;
        let mut state = self.initial_state();
        let mut total = 0.0;
        for (t, x) in seq.iter_rows().enumerate() {
            let out = self.step(x, &mut state)?;
            total += kl_raw(&out.posterior.mean, &out.posterior.var, &self.prior.mean_at(t + 1)?)?;
            total += gaussian_nll_raw(x, &out.reconstruction.mean, &out.reconstruction.var)?;
        }
        Ok(total)
    }

    fn check_sequence(&self, seq: &Matrix) -> Result<()> {
        check_dim("sequence channels", self.input_dim(), seq.cols())?;
        check_dim("sequence length", self.sequence_len(), seq.rows())?;
        Ok(())
    }

    /// Records the training objective for `seq` on `tape`: the sum over steps
    /// of `KL(q_t || N(prior_t, I)) + NLL(x_t | decoder)`, where the encoder
    /// sees `x_t + corruption_t` and `z_t` is reparameterized with the frozen
    /// latent noise. Returns the loss node and the bound parameter leaves in
    /// [`Parameters`] order.
    pub fn record_loss(&self, tape: &mut Tape, seq: &Matrix, noise: &SequenceNoise) -> Result<(Var, Vec<Var>)> {
        self.check_sequence(seq)?;
        check_dim("corruption rows", seq.rows(), noise.corruption.rows())?;
        check_dim("corruption channels", seq.cols(), noise.corruption.cols())?;
        check_dim("latent noise rows", seq.rows(), noise.latent.rows())?;
        check_dim("latent noise dim", self.latent_dim(), noise.latent.cols())?;

        let enc = tape.bind_lstm(&self.encoder);
        let enc_mean = tape.bind_dense(&self.encoder_mean);
        let enc_var = tape.bind_dense(&self.encoder_var);
        let dec = tape.bind_lstm(&self.decoder);
        let dec_mean = tape.bind_dense(&self.decoder_mean);
        let dec_var = tape.bind_dense(&self.decoder_var);
        let leaves = vec![
            enc.input_weight,
            enc.recurrent_weight,
            enc.bias,
            enc_mean.weight,
            enc_mean.bias,
            enc_var.weight,
            enc_var.bias,
            dec.input_weight,
            dec.recurrent_weight,
            dec.bias,
            dec_mean.weight,
            dec_mean.bias,
            dec_var.weight,
            dec_var.bias,
        ];

        let (he, hd) = (self.encoder.hidden_size(), self.decoder.hidden_size());
        let mut enc_state = tape.constant(&vec![0.0; 2 * he]);
        let mut dec_state = tape.constant(&vec![0.0; 2 * hd]);
        let mut total: Option<Var> = None;
        for t in 0..seq.rows() {
            let x = seq.row(t);
            let noisy: Vec<f64> = x.iter().zip(noise.corruption.row(t)).map(|(a, e)| a + e).collect();
            let x_in = tape.constant(&noisy);
            enc_state = tape.lstm(enc, x_in, enc_state)?;
            let h = tape.slice(enc_state, 0, he)?;
            let mu_z = tape.dense(enc_mean, h)?;
            let var_z = tape.dense(enc_var, h)?;
            let z = tape.reparam(mu_z, var_z, noise.latent.row(t))?;
            dec_state = tape.lstm(dec, z, dec_state)?;
            let hd_out = tape.slice(dec_state, 0, hd)?;
            let mu_x = tape.dense(dec_mean, hd_out)?;
            let var_x = tape.dense(dec_var, hd_out)?;
            let kl = tape.kl_normal(mu_z, var_z, &self.prior.mean_at(t + 1)?)?;
            let nll = tape.gaussian_nll(x, mu_x, var_x)?;
            let step = tape.add(kl, nll)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, step)?,
                None => step,
            });
        }
        let loss = total.ok_or_else(|| Error::Empty("sequence has no steps".into()))?;
        Ok((loss, leaves))
    }

    /// Loss value and gradients (in [`Parameters`] order) for one sequence.
    pub fn loss_and_gradient(&self, seq: &Matrix, noise: &SequenceNoise) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let (loss, leaves) = self.record_loss(&mut tape, seq, noise)?;
        let grads = tape.backward(loss)?;
        let tensors = self.tensors();
        let out = leaves
            .iter()
            .zip(tensors)
            .map(|(v, like)| grads.matrix(*v, like))
            .collect();
        Ok((tape.scalar(loss)?, out))
    }
}

fn step_cell(cell: &LstmCell, x: &[f64], packed: &[f64]) -> Vec<f64> {
    let h = cell.hidden_size();
    let mut gates = vec![0.0; 4 * h];
    let mut next = vec![0.0; 2 * h];
    let mut tanh_c = vec![0.0; h];
    cell.forward_into(x, &packed[..h], &packed[h..], &mut gates, &mut next, &mut tanh_c);
    next
}

impl Parameters for LstmVae {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.encoder.tensors();
        v.extend(self.encoder_mean.tensors());
        v.extend(self.encoder_var.tensors());
        v.extend(self.decoder.tensors());
        v.extend(self.decoder_mean.tensors());
        v.extend(self.decoder_var.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.encoder_mean.tensors_mut());
        v.extend(self.encoder_var.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.extend(self.decoder_mean.tensors_mut());
        v.extend(self.decoder_var.tensors_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::loss::{gaussian_nll, kl_term};
    use crate::nn::softplus;

    fn cfg(d: usize, k: usize, h: usize) -> LstmVaeConfig {
        LstmVaeConfig {
            input_dim: d,
            latent_dim: k,
            encoder_hidden: h,
            decoder_hidden: h,
            seed: 11,
            ..Default::default()
        }
    }

    fn toy_seq(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * d).map(|_| rng.random::<f64>()).collect();
        Matrix::from_vec(t, d, data).unwrap()
    }

    #[test]
    fn corrupt_respects_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = vec![0.2, 0.4, 0.9];
        assert_eq!(corrupt(&x, 0.0, &mut rng), x);
        let a = corrupt(&x, 0.1, &mut ChaCha8Rng::seed_from_u64(5));
        let b = corrupt(&x, 0.1, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);

        let zeros = vec![0.0; 100_000];
        let noisy = corrupt(&zeros, 0.1, &mut rng);
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        let sd = (noisy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (noisy.len() - 1) as f64).sqrt();
        assert!((0.098..=0.102).contains(&sd), "sd {sd}");
    }

    #[test]
    fn zero_model_heads_return_biases() {
        let mut m = LstmVae::zeros(cfg(2, 2, 3), 4).unwrap();
        m.encoder_mean.bias = Matrix::column(vec![0.3, -0.7]);
        m.encoder_var.bias = Matrix::column(vec![-1.0, 2.0]);
        m.decoder_mean.bias = Matrix::column(vec![0.25, 0.5]);
        let seq = toy_seq(4, 2, 1);
        for out in m.run(&seq).unwrap() {
            assert_eq!(out.posterior.mean, vec![0.3, -0.7]);
            assert_eq!(out.posterior.var, vec![softplus(-1.0), softplus(2.0)]);
            assert_eq!(out.reconstruction.mean, vec![0.25, 0.5]);
            assert!(out.reconstruction.var.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn uninitialized_or_foreign_state_is_a_contract_error() {
        let m = LstmVae::new(cfg(2, 2, 3), 4).unwrap();
        let mut s = SequenceState::default();
        assert!(matches!(m.encode_step(&[0.0, 0.0], &mut s), Err(Error::Contract(_))));
        let other = LstmVae::new(cfg(2, 2, 5), 4).unwrap();
        let mut foreign = other.initial_state();
        assert!(m.encode_step(&[0.0, 0.0], &mut foreign).is_err());
        let mut ok = m.initial_state();
        assert!(m.encode_step(&[0.0], &mut ok).is_err());
    }

    #[test]
    fn reset_prevents_state_leakage() {
        let m = LstmVae::new(cfg(3, 2, 4), 6).unwrap();
        let seq = toy_seq(6, 3, 2);
        let a = m.run(&seq).unwrap();
        let b = m.run(&seq).unwrap();
        assert_eq!(a, b);
        let mut state = m.initial_state();
        for x in seq.iter_rows() {
            m.step(x, &mut state).unwrap();
        }
        assert_eq!(state.steps(), 6);
        m.reset(&mut state);
        let first = m.step(seq.row(0), &mut state).unwrap();
        assert_eq!(first, a[0]);
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let m = LstmVae::new(cfg(3, 2, 4), 5).unwrap();
        let seq = toy_seq(5, 3, 4);
        let noise = SequenceNoise::deterministic(5, 3, 2);
        let mut tape = Tape::new();
        let (loss, _) = m.record_loss(&mut tape, &seq, &noise).unwrap();
        let taped = tape.scalar(loss).unwrap();
        let plain = m.deterministic_loss(&seq).unwrap();
        assert!((taped - plain).abs() <= 1e-12 * plain.abs().max(1.0));
    }

    #[test]
    fn single_step_loss_is_kl_plus_nll() {
        let m = LstmVae::new(cfg(2, 2, 3), 1).unwrap();
        let seq = toy_seq(1, 2, 8);
        let out = m.run(&seq).unwrap().remove(0);
        let expected = kl_term(&out.posterior, &m.prior.mean_at(1).unwrap()).unwrap()
            + gaussian_nll(seq.row(0), &out.reconstruction).unwrap();
        let loss = m.deterministic_loss(&seq).unwrap();
        assert_eq!(loss, expected);
    }

    #[test]
    fn random_model_loss_is_finite() {
        let m = LstmVae::new(cfg(4, 3, 6), 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let seq = toy_seq(20, 4, 3);
        let noise = SequenceNoise::sample(20, 4, 3, 0.1, &mut rng);
        let (loss, grads) = m.loss_and_gradient(&seq, &noise).unwrap();
        assert!(loss.is_finite());
        assert!(grads.iter().all(Matrix::is_finite));
    }

    #[test]
    fn sequence_shape_is_checked() {
        let m = LstmVae::new(cfg(2, 2, 3), 5).unwrap();
        assert!(m.deterministic_loss(&toy_seq(4, 2, 0)).is_err());
        assert!(m.deterministic_loss(&toy_seq(5, 3, 0)).is_err());
    }
}
