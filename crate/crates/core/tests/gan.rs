mod common;

use common::*;
use gids_core::synthesizer::{generation_count, GanConfig, GanPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn learns_first_two_moments() {
    let (mean, std) = gan_moments(0, &moment_gan_config(0));
    assert!(moments_ok(mean, std), "mean {mean:?} std {std:?}");
}

#[test]
fn discriminator_step_ascends_its_objective() {
    // Small steps on fixed batches: V must not go down, up to rare ties.
    let mut failures = 0;
    for seed in 0..100 {
        let config = GanConfig {
            hidden_layers: vec![8],
            learning_rate: 1e-3,
            momentum: 0.0,
            seed,
            ..GanConfig::default()
        };
        let mut gan = GanPair::new(3, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = gaussian(&mut rng, 16, 3) + 1.0;
        let noise = gaussian(&mut rng, 16, config.noise_dim);
        let before = gan.d_step_with_noise(real.view(), noise.view()).unwrap();
        let after = gan.discriminator_objective(real.view(), noise.view()).unwrap();
        failures += usize::from(after < before);
    }
    assert!(failures <= 2, "{failures} of 100 steps lowered V");
}

#[test]
fn generator_step_descends_its_loss() {
    let mut failures = 0;
    for seed in 0..100 {
        let config = GanConfig {
            hidden_layers: vec![8],
            learning_rate: 1e-3,
            momentum: 0.0,
            seed,
            ..GanConfig::default()
        };
        let mut gan = GanPair::new(3, &config).unwrap();
        let noise = gaussian(&mut ChaCha8Rng::seed_from_u64(seed), 16, config.noise_dim);
        let before = gan.g_step_with_noise(noise.view()).unwrap();
        let after = gan.generator_loss(noise.view()).unwrap();
        failures += usize::from(after > before);
    }
    assert!(failures <= 2, "{failures} of 100 steps raised the loss");
}

#[test]
fn generation_count_rounds_up() {
    assert_eq!(generation_count(0.25, 40), 10);
    assert_eq!(generation_count(0.25, 41), 11);
    assert_eq!(generation_count(0.25, 1), 1);
    assert_eq!(generation_count(0.25, 0), 0);
}
