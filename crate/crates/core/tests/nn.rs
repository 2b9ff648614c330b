use modelaid::error::Error;
use modelaid::nn::{
    fine_tune, gradient, io, train, AdamConfig, ColumnScale, Loss, Matrix, MlpModel, OutputActivation, Scaling,
    TrainConfig, Transform,
};
use modelaid::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_data(n: usize, n_in: usize, n_out: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..n * n_in).map(|_| StandardNormal.sample(&mut rng)).collect();
    // Normalized targets of a log10-scaled positive quantity.
    let y: Vec<f64> = (0..n * n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    (Matrix::new(n, n_in, x).unwrap(), Matrix::new(n, n_out, y).unwrap())
}

fn with_params(model: &MlpModel, params: Vec<f64>) -> MlpModel {
    MlpModel::from_parts(model.layer_sizes().to_vec(), model.output_activation(), params, model.scaling().clone()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences of the full-batch loss.
fn finite_difference(model: &MlpModel, x: &Matrix, y: &Matrix, loss: Loss, h: f64) -> Vec<f64> {
    (0..model.params().len())
        .map(|k| {
            let mut up = model.params().to_vec();
            let mut down = up.clone();
            up[k] += h;
            down[k] -= h;
            let fu = gradient(&with_params(model, up), x, y, loss).unwrap().0;
            let fd = gradient(&with_params(model, down), x, y, loss).unwrap().0;
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradient_matches_finite_differences_on_random_models() {
    let mut rng = rng_from_seed(99);
    for case in 0..20u64 {
        let depth = rng.random_range(1..4);
        let mut sizes = vec![rng.random_range(1..4)];
        sizes.extend((0..depth).map(|_| rng.random_range(2..7)));
        sizes.push(rng.random_range(1..3));
        let n_in = sizes[0];
        let n_out = *sizes.last().unwrap();
        let loss = if case % 2 == 0 { Loss::Mse } else { Loss::RelativeMse };
        let scaling = Scaling {
            features: vec![ColumnScale::identity(); n_in],
            targets: vec![ColumnScale { transform: Transform::Log10, mean: 0.3, std: 0.5 }; n_out],
        };
        let init = MlpModel::init(&sizes, OutputActivation::Linear, case).unwrap();
        // Nonzero biases keep pre-activations off the ReLU kink at exactly zero.
        let mut params = init.params().to_vec();
        let mut offset = 0;
        for w in sizes.windows(2) {
            offset += w[0] * w[1];
            params[offset..offset + w[1]].iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            offset += w[1];
        }
        let model = MlpModel::from_parts(sizes.clone(), OutputActivation::Linear, params, scaling).unwrap();
        let (x, y) = random_data(12, n_in, n_out, case + 1000);
        let (_, g) = gradient(&model, &x, &y, loss).unwrap();
        let fd = finite_difference(&model, &x, &y, loss, 1e-5);
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&fd).max(1e-12);
        assert!(rel < 1e-4, "case {case} {sizes:?} {loss:?}: relative gradient error {rel}");
    }
}

#[test]
fn full_batch_gradient_ignores_row_order() {
    let model = MlpModel::init(&[3, 8, 8, 2], OutputActivation::Linear, 4).unwrap();
    let (x, y) = random_data(40, 3, 2, 5);
    let mut perm: Vec<usize> = (0..40).rev().collect();
    perm.swap(3, 17);
    let (va, ga) = gradient(&model, &x, &y, Loss::Mse).unwrap();
    let (vb, gb) = gradient(&model, &x.select_rows(&perm), &y.select_rows(&perm), Loss::Mse).unwrap();
    assert!((va - vb).abs() <= 1e-12 * va.abs());
    let diff: Vec<f64> = ga.iter().zip(&gb).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-12 * norm(&ga));
}

#[test]
fn duplicating_the_batch_keeps_the_mean_gradient() {
    let model = MlpModel::init(&[2, 5, 1], OutputActivation::Linear, 8).unwrap();
    let (x, y) = random_data(10, 2, 1, 9);
    let (v1, g1) = gradient(&model, &x, &y, Loss::Mse).unwrap();
    let (v2, g2) = gradient(&model, &x.vstack(&x).unwrap(), &y.vstack(&y).unwrap(), Loss::Mse).unwrap();
    assert!((v1 - v2).abs() <= 1e-12 * v1);
    assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
}

#[test]
fn he_initialization_has_the_expected_spread() {
    let fan_in = 50;
    let out = 2000;
    let model = MlpModel::init(&[fan_in, out, 1], OutputActivation::Linear, 21).unwrap();
    let (w, b) = model.layer(0);
    assert_eq!(w.len(), 100_000);
    assert!(b.iter().all(|&v| v == 0.0));
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let expected = (2.0 / fan_in as f64).sqrt();
    assert!((std / expected - 1.0).abs() < 0.02, "std {std} vs {expected}");
    assert!(mean.abs() < 4.0 * expected / (w.len() as f64).sqrt());
}

#[test]
fn forward_matches_hand_evaluation() {
    let params = vec![
        // layer 0: 3x2 weights then 3 biases
        0.5, -1.0, 2.0, 0.25, -0.75, -0.5, 0.1, -0.2, 0.3,
        // layer 1: 1x3 weights then 1 bias
        1.5, -2.0, 0.5, 0.05,
    ];
    let model = MlpModel::from_parts(vec![2, 3, 1], OutputActivation::Linear, params.clone(), Scaling::identity(2, 1)).unwrap();
    let relu = |v: f64| v.max(0.0);
    for x in [[0.3, -0.7], [1.0, 2.0], [-1.5, 0.4], [0.0, 0.0]] {
        let h: Vec<f64> = (0..3).map(|o| relu(params[2 * o] * x[0] + params[2 * o + 1] * x[1] + params[6 + o])).collect();
        let expected = params[9] * h[0] + params[10] * h[1] + params[11] * h[2] + params[12];
        let got = model.forward(&x).unwrap()[0];
        assert!((got - expected).abs() < 1e-12, "{x:?}: {got} vs {expected}");
    }
}

fn doubling_data(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    (Matrix::new(n, 1, x).unwrap(), Matrix::new(n, 1, y).unwrap())
}

fn fitted_scaling(x: &Matrix, y: &Matrix) -> Scaling {
    Scaling {
        features: vec![ColumnScale::fit(x.column(0), Transform::Identity, true).unwrap()],
        targets: vec![ColumnScale::fit(y.column(0), Transform::Identity, true).unwrap()],
    }
}

#[test]
fn learns_a_linear_map() {
    let (x, y) = doubling_data(1000, 1);
    let scaling = fitted_scaling(&x, &y);
    let model = MlpModel::init(&[1, 16, 16, 1], OutputActivation::Linear, 2).unwrap().with_scaling(scaling.clone()).unwrap();
    let cfg = TrainConfig { epochs: 200, batch_size: 32, loss: Loss::RelativeMse, seed: 3, ..TrainConfig::default() };
    let (trained, report) =
        train(&model, &scaling.scale_features(&x).unwrap(), &scaling.scale_targets(&y).unwrap(), &cfg).unwrap();
    assert!(report.final_validation_loss() < 1e-3, "validation {}", report.final_validation_loss());
    let (xt, yt) = doubling_data(200, 77);
    let err = modelaid::nn::relative_mse(&trained.predict(&xt).unwrap(), &yt).unwrap();
    assert!(err < 1e-3, "held-out relative MSE {err}");
}

#[test]
fn fine_tuning_on_the_pretraining_set_keeps_improving() {
    let mut improved = Vec::new();
    for seed in 0..5u64 {
        let (x, y) = doubling_data(300, 10 + seed);
        let scaling = fitted_scaling(&x, &y);
        let (zx, zy) = (scaling.scale_features(&x).unwrap(), scaling.scale_targets(&y).unwrap());
        let model = MlpModel::init(&[1, 8, 8, 1], OutputActivation::Linear, seed).unwrap().with_scaling(scaling).unwrap();
        let cfg = TrainConfig { epochs: 20, batch_size: 32, seed, ..TrainConfig::default() };
        let (pre, pre_report) = train(&model, &zx, &zy, &cfg).unwrap();
        let (_, ft_report) = fine_tune(&pre, &zx, &zy, &cfg).unwrap();
        improved.push(ft_report.final_train_loss() / pre_report.final_train_loss());
    }
    improved.sort_by(f64::total_cmp);
    assert!(improved[2] < 1.0, "median loss ratio {:?}", improved);
}

#[test]
fn fine_tuning_for_zero_epochs_is_the_identity() {
    let (x, y) = doubling_data(50, 4);
    let model = MlpModel::init(&[1, 4, 1], OutputActivation::Linear, 4).unwrap();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let (same, report) = fine_tune(&model, &x, &y, &cfg).unwrap();
    assert_eq!(same, model);
    assert!(report.train_loss.is_empty());
}

#[test]
fn fine_tuning_rejects_a_different_architecture() {
    let model = MlpModel::init(&[2, 4, 1], OutputActivation::Linear, 4).unwrap();
    let (x, y) = random_data(20, 3, 1, 1);
    assert!(matches!(fine_tune(&model, &x, &y, &TrainConfig::default()), Err(Error::Shape(_))));
    let (x, y) = random_data(20, 2, 2, 1);
    assert!(matches!(fine_tune(&model, &x, &y, &TrainConfig::default()), Err(Error::Shape(_))));
}

#[test]
fn adam_settings_are_validated() {
    let model = MlpModel::init(&[1, 4, 1], OutputActivation::Linear, 4).unwrap();
    let (x, y) = doubling_data(20, 4);
    let cfg = TrainConfig { adam: AdamConfig { beta1: 1.0, ..AdamConfig::default() }, ..TrainConfig::default() };
    assert!(train(&model, &x, &y, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_and_load_round_trip(sizes in prop::collection::vec(1usize..6, 2..5), seed: u64,
                                mean in -3.0f64..3.0, std in 0.1f64..4.0, clamped: bool) {
        let n_in = sizes[0];
        let n_out = *sizes.last().unwrap();
        let act = if clamped { OutputActivation::ClampedUnit } else { OutputActivation::Linear };
        let scaling = Scaling {
            features: vec![ColumnScale { transform: Transform::Log10, mean, std }; n_in],
            targets: vec![ColumnScale { transform: Transform::Identity, mean: -mean, std }; n_out],
        };
        let model = MlpModel::init(&sizes, act, seed).unwrap().with_scaling(scaling).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mlp");
        io::save(&model, &path).unwrap();
        let back = io::load(&path).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(io::to_bytes(&back), io::to_bytes(&model));
        prop_assert_eq!(back.checksum(), model.checksum());
    }

    #[test]
    fn predictions_are_finite(seed: u64, x in prop::collection::vec(-1e3f64..1e3, 3)) {
        let model = MlpModel::init(&[3, 8, 4, 1], OutputActivation::ClampedUnit, seed).unwrap();
        let y = model.forward(&x).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&y));
    }
}
