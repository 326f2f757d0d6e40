mod common;

use common::fd_check;
use crisp::approx::{Head, Matrix, MlpSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(spec: MlpSpec, seed: u64) {
    let r = fd_check(&spec, seed, None);
    assert!(r.checked > 0 && r.worst_rel < 1e-4, "{r:?} for {spec:?}");
}

#[test]
fn linear_head_gradients() {
    check(MlpSpec::new(4, 3, vec![16, 16], Head::Linear), 1);
}

#[test]
fn sigmoid_head_gradients() {
    check(MlpSpec::new(5, 1, vec![8], Head::Sigmoid), 2);
}

#[test]
fn gaussian_head_gradients() {
    check(MlpSpec::new(3, 2, vec![12, 12], Head::TanhGaussian), 3);
}

#[test]
fn no_hidden_layer() {
    check(MlpSpec::new(3, 2, vec![], Head::Linear), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_architectures(seed in 0u64..10_000, din in 1usize..5, dout in 1usize..4, h in 1usize..10) {
        check(MlpSpec::new(din, dout, vec![h, h + 1], Head::Linear), seed);
    }
}
