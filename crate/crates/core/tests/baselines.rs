use lvad_core::baselines::{sliding_windows, AeConfig, AeDetector, EncDecConfig, EncDecDetector, WindowTrainConfig};
use lvad_core::nn::Matrix;
use lvad_core::svm::{GammaRule, OneClassSvm};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn constant_sequences(n: usize, len: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let level = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            Matrix::from_vec(len, 2, (0..len).flat_map(|_| level).collect()).unwrap()
        })
        .collect()
}

fn noisy_waves(n: usize, len: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).unwrap();
    (0..n)
        .map(|_| {
            let phase = rng.random_range(0.0..0.3);
            let data = (0..len)
                .flat_map(|t| {
                    let u = t as f64 / len as f64 * 6.0 + phase;
                    [0.5 + 0.3 * u.sin(), 0.5 + 0.3 * u.cos()]
                })
                .map(|v| v + noise.sample(&mut rng))
                .collect();
            Matrix::from_vec(len, 2, data).unwrap()
        })
        .collect()
}

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn quick() -> WindowTrainConfig {
    WindowTrainConfig {
        learning_rate: 5e-3,
        max_epochs: 40,
        windows_per_epoch: 1024,
        validation_windows: 512,
        ..Default::default()
    }
}

#[test]
fn autoencoder_learns_constant_sequences() {
    let train = constant_sequences(30, 20, 1);
    let val = constant_sequences(8, 20, 2);
    let cfg = AeConfig {
        train: quick(),
        ..Default::default()
    };
    let (det, history) = AeDetector::fit(&train, &val, &cfg, 7).unwrap();
    assert!(history.best_val_loss().unwrap() < 1e-2);
    for seq in constant_sequences(5, 20, 3) {
        let w = sliding_windows(&seq, 3).unwrap();
        for row in w.iter_rows() {
            let s = det.model.score(row).unwrap();
            assert!((0.0..1e-2).contains(&s), "score {s}");
        }
    }
}

#[test]
fn autoencoder_flags_an_injected_spike() {
    let train = noisy_waves(30, 60, 4);
    let val = noisy_waves(10, 60, 5);
    let cfg = AeConfig {
        train: quick(),
        ..Default::default()
    };
    let (det, _) = AeDetector::fit(&train, &val, &cfg, 3).unwrap();
    let normal: Vec<f64> = noisy_waves(20, 60, 6)
        .iter()
        .flat_map(|s| det.trace(s).unwrap().residuals)
        .collect();
    let mut spiked = noisy_waves(1, 60, 7).remove(0);
    spiked.set(30, 0, spiked.get(30, 0) + 1.5);
    let trace = det.trace(&spiked).unwrap();
    assert!(trace.max() > percentile(normal, 0.99));
    let hit = trace.first_above(trace.max() - 1e-12).unwrap();
    assert!((30..=32).contains(&hit), "peak at {hit}");
}

#[test]
fn encdec_flags_an_injected_spike_and_is_deterministic() {
    let train = noisy_waves(20, 40, 8);
    let val = noisy_waves(8, 40, 9);
    let cfg = EncDecConfig {
        hidden: 8,
        train: WindowTrainConfig {
            max_epochs: 15,
            ..quick()
        },
        ..Default::default()
    };
    let (a, ha) = EncDecDetector::fit(&train, &val, &cfg, 11).unwrap();
    let (b, hb) = EncDecDetector::fit(&train, &val, &cfg, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);

    let normal: Vec<f64> = noisy_waves(20, 40, 10)
        .iter()
        .flat_map(|s| a.trace(s).unwrap().residuals)
        .collect();
    let mut spiked = noisy_waves(1, 40, 12).remove(0);
    spiked.set(20, 1, spiked.get(20, 1) - 1.5);
    let trace = a.trace(&spiked).unwrap();
    assert!(trace.max() > percentile(normal, 0.99));
    assert_eq!(trace.residuals.len(), 40 - 3 + 1);
}

fn cluster(seed: u64, n: usize, dim: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| noise.sample(&mut rng)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn support_fraction_respects_nu(seed in 0u64..1000, n in 50usize..120, dim in 1usize..4, nu in 0.05f64..0.95) {
        let x = cluster(seed, n, dim);
        let m = OneClassSvm::fit(&x, nu, GammaRule::Scale).unwrap();
        let frac = m.num_support() as f64 / n as f64;
        // nu lower-bounds the support fraction and upper-bounds the share of
        // coefficients at their box bound (the margin errors)
        prop_assert!(frac + 1e-9 >= nu - 0.05, "fraction {} for nu {}", frac, nu);
        let bounded = m.coef.iter().filter(|a| **a >= 1.0 - 1e-9).count() as f64 / n as f64;
        prop_assert!(bounded <= nu + 0.05, "bounded {} for nu {}", bounded, nu);
        let total: f64 = m.coef.iter().sum();
        prop_assert!((total - nu * n as f64).abs() < 1e-6);
    }

    #[test]
    fn far_outliers_score_negative(seed in 0u64..1000, dim in 1usize..4) {
        let x = cluster(seed, 60, dim);
        let m = OneClassSvm::fit(&x, 0.1, GammaRule::Scale).unwrap();
        let far = vec![10.0; dim];
        prop_assert!(m.decision(&far).unwrap() < 0.0);
    }
}
