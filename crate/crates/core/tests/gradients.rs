use lvad_core::model::{gradcheck, LstmVae, LstmVaeConfig, SequenceNoise};
use lvad_core::nn::{Activation, Dense, LstmCell, Matrix, Parameters, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn parameter_sum_has_unit_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_matrix(3, 4, &mut rng);
    let mut tape = Tape::new();
    let leaf = tape.leaf(&w);
    let total = tape.sum(leaf);
    let grads = tape.backward(total).unwrap();
    assert!(grads.get(leaf).unwrap().iter().all(|g| *g == 1.0));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let v = tape.leaf_vector(&[1.0, 2.0]);
    assert!(tape.backward(v).is_err());
}

#[test]
fn dense_squared_error_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layer = Dense::new(4, 3, Activation::Identity, &mut rng);
    let x = [0.3, -0.7, 1.1, 0.05];
    let y = [0.5, -0.2, 0.9];
    let mut tape = Tape::new();
    let vars = tape.bind_dense(&layer);
    let xv = tape.constant(&x);
    let pred = tape.dense(vars, xv).unwrap();
    let loss = tape.squared_error(pred, &y).unwrap();
    let grads = tape.backward(loss).unwrap();
    let [gw, gb] = grads.dense(&vars, &layer);

    let out = layer.forward(&x).unwrap();
    for i in 0..3 {
        let r = 2.0 * (out[i] - y[i]);
        assert!((gb.get(i, 0) - r).abs() < 1e-12);
        for j in 0..4 {
            assert!((gw.get(i, j) - r * x[j]).abs() < 1e-12);
        }
    }
}

fn lstm_loss(cell: &LstmCell, xs: &[Vec<f64>]) -> f64 {
    let h = cell.hidden_size();
    let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
    let mut total = 0.0;
    for x in xs {
        let (nh, nc) = cell.step(x, &hs, &cs).unwrap();
        hs = nh;
        cs = nc;
        total += hs.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum::<f64>();
        total += cs.iter().map(|v| v * v).sum::<f64>();
    }
    total
}

#[test]
fn lstm_through_time_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cell = LstmCell::new(3, 4, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let mut tape = Tape::new();
    let vars = tape.bind_lstm(&cell);
    let mut state = tape.constant(&[0.0; 8]);
    let weights: Vec<f64> = (0..4).map(|i| i as f64 + 1.0).collect();
    let mut terms = Vec::new();
    for x in &xs {
        let xv = tape.constant(x);
        state = tape.lstm(vars, xv, state).unwrap();
        let h = tape.slice(state, 0, 4).unwrap();
        let c = tape.slice(state, 4, 4).unwrap();
        let wv = tape.constant(&weights);
        let wh = tape.mul(h, wv).unwrap();
        let a = tape.sum(wh);
        let cc = tape.mul(c, c).unwrap();
        let b = tape.sum(cc);
        terms.push(tape.add(a, b).unwrap());
    }
    let mut loss = terms[0];
    for t in &terms[1..] {
        loss = tape.add(loss, *t).unwrap();
    }
    let base = lstm_loss(&cell, &xs);
    assert!((tape.scalar(loss).unwrap() - base).abs() < 1e-12);
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.lstm(&vars, &cell);

    for (k, g) in analytic.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = cell.clone();
            plus.tensors_mut()[k].as_mut_slice()[idx] += STEP;
            let mut minus = cell.clone();
            minus.tensors_mut()[k].as_mut_slice()[idx] -= STEP;
            let numeric = (lstm_loss(&plus, &xs) - lstm_loss(&minus, &xs)) / (2.0 * STEP);
            let a = g.as_slice()[idx];
            assert!(rel_err(a, numeric) < 1e-5, "tensor {k} idx {idx}: {a} vs {numeric}");
        }
    }
}

#[test]
fn full_objective_matches_finite_differences_with_frozen_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = LstmVaeConfig {
        input_dim: 3,
        latent_dim: 2,
        encoder_hidden: 4,
        decoder_hidden: 5,
        ..LstmVaeConfig::default()
    };
    let len = 6;
    let model = LstmVae::with_rng(config, len, &mut rng).unwrap();
    let seq = random_matrix(len, 3, &mut rng);
    let noise = SequenceNoise::sample(len, 3, 2, 0.1, &mut rng);
    let objective = |m: &LstmVae| m.loss_and_gradient(&seq, &noise).unwrap().0;

    let (_, grads) = model.loss_and_gradient(&seq, &noise).unwrap();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = model.clone();
            plus.tensors_mut()[k].as_mut_slice()[idx] += STEP;
            let mut minus = model.clone();
            minus.tensors_mut()[k].as_mut_slice()[idx] -= STEP;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(g.as_slice()[idx], numeric));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn random_small_instances_match_finite_differences() {
    for seed in 0..24 {
        let (model, seq, noise) = gradcheck::random_instance(seed).unwrap();
        let worst = gradcheck::max_relative_error(&model, &seq, &noise, STEP, 1e-3).unwrap();
        assert!(worst < 1e-4, "instance {seed}: worst relative error {worst}");
    }
}
