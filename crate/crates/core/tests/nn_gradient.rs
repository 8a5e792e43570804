use abcnet::nn::{gradient_check, MlpModel};
use abcnet::rng::RngStream;
use ndarray::Array2;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

const P: usize = 5;
const Q: usize = 2;
const BATCH: usize = 8;
/// Coordinates probed per network; small networks are checked exhaustively.
const MAX_COORDS: usize = 400;

fn worst_error(hidden: usize, width: usize, seed: u64, l2_lambda: f64) -> f64 {
    let mut rng = RngStream::new(seed, hidden as u64 * 1000 + width as u64);
    let mut model = MlpModel::init(&MlpModel::architecture(P, hidden, width, Q), &mut rng).unwrap();
    // Non-zero biases so their gradients are exercised away from the origin.
    let mut flat = model.params_flat();
    for v in flat.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += 0.05 * z;
    }
    model.set_params_flat(&flat);
    let inputs = Array2::from_shape_fn((BATCH, P), |_| StandardNormal.sample(&mut rng));
    let targets = Array2::from_shape_fn((BATCH, Q), |_| StandardNormal.sample(&mut rng));
    let n = model.num_params();
    let coords: Vec<usize> = if n <= MAX_COORDS {
        (0..n).collect()
    } else {
        sample(&mut rng, n, MAX_COORDS).into_vec()
    };
    gradient_check(&model, inputs.view(), targets.view(), l2_lambda, 1e-5, Some(&coords)).unwrap()
}

#[test]
fn backprop_matches_central_differences() {
    let mut worst = 0.0f64;
    for hidden in [1, 2, 3] {
        for width in [4, 8, 100] {
            for seed in 0..10 {
                let err = worst_error(hidden, width, seed, 0.0);
                assert!(err < 1e-5, "L={hidden} width={width} seed={seed}: relative error {err:e}");
                worst = worst.max(err);
            }
        }
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn penalty_gradient_matches_central_differences() {
    for hidden in [1, 2, 3] {
        for seed in 0..3 {
            let err = worst_error(hidden, 8, 100 + seed, 0.01);
            assert!(err < 1e-5, "L={hidden} seed={seed}: relative error {err:e}");
        }
    }
}
