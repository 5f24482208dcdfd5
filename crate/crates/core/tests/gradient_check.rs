//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartbullets::classifier::{backward, example_loss, forward, init_model, Gradients, ModelConfig, ModelParams};

const EPS: f64 = 1e-5;
const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor so that parameters with (near) zero gradient are judged
/// by absolute error; FD round-off at EPS is ~1e-11.
const REL_FLOOR: f64 = 1e-6;

fn random_model(seed: u64, dropout_rate: f64) -> ModelParams {
    let cfg = ModelConfig {
        vocab_size: 20,
        embed_dim: 5,
        filter_widths: vec![2, 3],
        feature_maps: 4,
        dropout_rate,
        max_len: 7,
        seed,
    };
    let mut model = init_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    model
}

fn loss(model: &ModelParams, ids: &[usize], label: usize, mask_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    example_loss(model, ids, label, true, &mut rng).unwrap()
}

/// Worst relative error over every scalar parameter.
fn check(model: &ModelParams, ids: &[usize], label: usize, mask_seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let (_, cache) = forward(model, ids, true, &mut rng).unwrap();
    let analytic: Gradients = backward(model, &cache, label);
    let analytic = analytic.to_dense(model);

    let mut worst = 0.0f64;
    let mut checked = 0;
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let mut plus = model.clone();
            plus.tensors_mut()[t][i] += EPS;
            let mut minus = model.clone();
            minus.tensors_mut()[t][i] -= EPS;
            let numeric = (loss(&plus, ids, label, mask_seed) - loss(&minus, ids, label, mask_seed)) / (2.0 * EPS);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            assert!(
                rel < MAX_REL_ERR,
                "tensor {t} index {i}: analytic {a:e} numeric {numeric:e} rel {rel:e}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

#[test]
fn every_parameter_matches_central_differences() {
    for seed in 0..5u64 {
        let model = random_model(seed, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let ids: Vec<usize> = (0..7).map(|_| rng.random_range(0..20)).collect();
        let label = (seed % 2) as usize;
        let (worst, checked) = check(&model, &ids, label, 7 + seed);
        assert_eq!(checked, model.num_parameters());
        eprintln!("seed {seed}: worst relative error {worst:e}");
    }
}

#[test]
fn gradient_check_without_dropout_and_with_padding() {
    let model = random_model(42, 0.0);
    let ids = [3, 9, 14, 0, 0, 0, 0];
    check(&model, &ids, 1, 0);
    check(&model, &ids, 0, 0);
}
