use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statetrack_core::lrnn::EigenRange;
use statetrack_core::tasks::Sample;
use statetrack_train::gradcheck::max_relative_error;
use statetrack_train::{Head, LayerKind, LayerSpec, ModelConfig, TrainableModel};

fn tiny(kind: LayerKind, range: EigenRange, head: Head, seed: u64) -> (TrainableModel, Vec<Sample>) {
    let cfg = ModelConfig {
        vocab: 3,
        classes: 3,
        d_model: 4,
        layers: vec![LayerSpec { kind, range }, LayerSpec { kind, range }],
        head,
        full_dim: 2,
    };
    let mut m = TrainableModel::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    // nonzero biases and initial states so every path carries gradient
    for p in m.params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let samples = (0..2)
        .map(|_| {
            let tokens: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
            let labels = (0..6).map(|_| rng.gen_range(0..3)).collect();
            Sample {
                tokens,
                labels,
                mask: vec![1; 6],
            }
        })
        .collect();
    (m, samples)
}

fn check(kind: LayerKind) {
    for range in [EigenRange::UnitInterval, EigenRange::Symmetric] {
        for seed in 0..20 {
            let head = if seed % 2 == 0 { Head::Linear } else { Head::Mlp { hidden: 5 } };
            let (m, s) = tiny(kind, range, head, seed);
            let err = max_relative_error(&m, &s, 1e-4).unwrap();
            assert!(err <= 1e-4, "{kind:?} {range:?} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn diagonal_gradients_match_finite_differences() {
    check(LayerKind::Diagonal);
}

#[test]
fn delta_gradients_match_finite_differences() {
    check(LayerKind::Delta);
}

#[test]
fn full_gradients_match_finite_differences() {
    check(LayerKind::Full);
}
