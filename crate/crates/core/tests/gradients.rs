mod common;

use common::*;
use gids_core::neural::Activation;

#[test]
fn detector_shape_matches_finite_differences() {
    let stats = check_mlp(&[20, 50, 50, 10], Activation::Relu, Activation::Softmax, 1);
    assert!(stats.checked > 4000, "{stats:?}");
    assert!(stats.max_rel_error < 1e-4, "{stats:?}");
}

#[test]
fn random_shapes_match_finite_differences() {
    for (i, (dims, hidden, output)) in gradient_shapes(7).into_iter().enumerate().skip(1) {
        let stats = check_mlp(&dims, hidden, output, i as u64);
        assert!(stats.max_rel_error < 1e-4, "{dims:?} {hidden} {output}: {stats:?}");
    }
}

#[test]
fn gan_halves_match_finite_differences() {
    for seed in 0..3 {
        let d = check_discriminator(4, seed);
        let g = check_generator(4, seed);
        assert!(d.max_rel_error < 1e-4, "discriminator {seed}: {d:?}");
        assert!(g.max_rel_error < 1e-4, "generator {seed}: {g:?}");
        assert!(d.checked > 0 && g.checked > 0);
    }
}

#[test]
fn relative_error_floor() {
    assert_eq!(rel_error(0.0, 0.0), 0.0);
    assert!((rel_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    assert!((rel_error(2.0, 1.0) - 0.5).abs() < 1e-12);
}
