mod common;

use finder::finder::noisy_preset;
use finder::objectives::MinibatchObjective;
use finder::tinynet::{Activation, Dataset, MlpSpec};
use finder::training::{train_classifier, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{central_difference, max_component_error};

const KINK_MARGIN: f64 = 1e-4;

fn random_dataset(rng: &mut ChaCha8Rng, len: usize, dim: usize, classes: usize) -> Dataset {
    let features = (0..len * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let labels = (0..len).map(|i| i % classes).collect();
    Dataset::new(features, dim, labels, classes).unwrap()
}

/// Draws parameters until every hidden pre-activation sits clear of the
/// ReLU kink, so central differences see a smooth function.
fn smooth_draw(spec: &MlpSpec, data: &Dataset, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    loop {
        let theta: Vec<f64> = (0..spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if spec.min_abs_hidden_preactivation(&theta, data, &all).unwrap() >= KINK_MARGIN {
            return theta;
        }
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for sizes in [vec![2, 4, 2], vec![2, 8, 8, 2], vec![4, 16, 3]] {
        for activation in [Activation::Relu, Activation::Tanh] {
            let spec = MlpSpec::new(sizes.clone(), activation).unwrap();
            let data = random_dataset(&mut rng, 6, sizes[0], *sizes.last().unwrap());
            let all: Vec<usize> = (0..data.len()).collect();
            for _ in 0..20 {
                let theta = smooth_draw(&spec, &data, &mut rng);
                let (_, analytic) = spec.loss_and_grad(&theta, &data, &all).unwrap();
                let numeric = central_difference(|t| spec.loss(t, &data, &all).unwrap(), &theta, 1e-6);
                let err = max_component_error(&analytic, &numeric);
                assert!(err <= 1e-5, "{sizes:?} {activation:?}: {err:e}");
            }
        }
    }
}

#[test]
fn noisy_training_lowers_the_full_loss() {
    let mut first = Vec::new();
    let mut last = Vec::new();
    for seed in 0..5u64 {
        let data = Dataset::gaussian_blobs(400, 2, 2, 1.0, seed).unwrap();
        let spec = MlpSpec::new(vec![2, 8, 2], Activation::Relu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta0 = spec.init_params(&mut rng);
        let obj = MinibatchObjective::new(spec, data, 100, seed).unwrap();
        let hp = noisy_preset();
        let out = train_classifier(&obj, &theta0, &Trainer::Finder(hp), 30, 1.1).unwrap();
        assert_eq!(out.trace.len(), 30);
        assert!(out.trace.iter().all(|e| e.loss.is_finite() && e.loss < 10.0));
        first.push(obj.full_loss(&theta0).unwrap());
        last.push(out.trace.last().unwrap().loss);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (start, end) = (median(&mut first), median(&mut last));
    assert!(end < start, "median loss went from {start} to {end}");
}
