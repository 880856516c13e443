//! Per-label GAN used to synthesize candidate training rows.
//!
//! The discriminator ascends
//! `V = mean[log D(x)] + mean[log(1 - D(G(z)))]` over real rows `x` and noise
//! `z`; the generator descends `mean[log(1 - D(G(z)))]` (or the
//! non-saturating `-mean[log D(G(z))]`). Reported objective values clamp
//! probabilities to `[PROB_CLAMP, 1 - PROB_CLAMP]`; gradients are taken in
//! logit form, so they are finite everywhere and agree with the clamped
//! expressions wherever the clamp is inactive.

use std::fmt::Write as _;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{sigmoid, Activation, Direction, Gradients, Mlp, Sgd};
use crate::store::FlaggedSample;

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    StandardNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `log(1 - D(G(z)))`, descended.
    #[default]
    Saturating,
    /// `-log D(G(z))`, descended.
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Discriminator steps per generator step.
    pub k: usize,
    /// Minibatch size `m` for real rows and noise draws.
    pub batch_size: usize,
    pub epochs: usize,
    pub noise: NoiseKind,
    pub generator_loss: GeneratorLoss,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden_layers: Vec<usize>,
    /// Train on per-feature z-scores of the positives and map generated rows
    /// back; constant features get scale 1.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 5,
            k: 1,
            batch_size: 64,
            epochs: 500,
            noise: NoiseKind::StandardNormal,
            generator_loss: GeneratorLoss::Saturating,
            learning_rate: 0.001,
            momentum: 0.9,
            hidden_layers: vec![50, 50],
            standardize: false,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.k == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("noise_dim, k, batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("GAN learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("GAN momentum must be in [0, 1)".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// `count` i.i.d. draws from the configured noise distribution.
pub fn sample_noise(rng: &mut ChaCha8Rng, count: usize, config: &GanConfig) -> Array2<f64> {
    match config.noise {
        NoiseKind::StandardNormal => {
            Array2::from_shape_simple_fn((count, config.noise_dim), || StandardNormal.sample(rng))
        }
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

/// `mean[log D(x)] + mean[log(1 - D(G(z)))]` from discriminator probabilities.
pub fn value_function(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let real = d_real.iter().map(|&p| clamped_ln(p)).sum::<f64>() / d_real.len().max(1) as f64;
    let fake = d_fake.iter().map(|&p| clamped_ln(1.0 - p)).sum::<f64>() / d_fake.len().max(1) as f64;
    real + fake
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanEpoch {
    pub epoch: usize,
    /// Mean discriminator objective over the epoch's `k` steps.
    pub d_objective: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone)]
pub struct GanPair {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub config: GanConfig,
    pub log: Vec<GanEpoch>,
    pub d_steps: usize,
    pub g_steps: usize,
    /// Affine map from network space to feature space: `x = net * scale + shift`.
    pub shift: Array1<f64>,
    pub scale: Array1<f64>,
    rng: ChaCha8Rng,
    g_opt: Sgd,
    d_opt: Sgd,
}

impl GanPair {
    /// Fresh generator `[noise, hidden.., data_dim]` (linear head) and
    /// discriminator `[data_dim, hidden.., 1]` (sigmoid head).
    pub fn new(data_dim: usize, config: &GanConfig) -> Result<Self> {
        config.validate()?;
        let mut g_dims = vec![config.noise_dim];
        g_dims.extend_from_slice(&config.hidden_layers);
        g_dims.push(data_dim);
        let mut d_dims = vec![data_dim];
        d_dims.extend_from_slice(&config.hidden_layers);
        d_dims.push(1);
        let generator = Mlp::new(&g_dims, Activation::Relu, Activation::Linear, config.seed)?;
        let discriminator = Mlp::new(&d_dims, Activation::Relu, Activation::Sigmoid, config.seed.wrapping_add(1))?;
        let g_opt = Sgd::new(&generator, config.learning_rate, config.momentum)?;
        let d_opt = Sgd::new(&discriminator, config.learning_rate, config.momentum)?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2)),
            generator,
            discriminator,
            config: config.clone(),
            log: Vec::new(),
            d_steps: 0,
            g_steps: 0,
            shift: Array1::zeros(data_dim),
            scale: Array1::ones(data_dim),
            g_opt,
            d_opt,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.discriminator.input_dim()
    }

    pub fn sample_noise(&mut self, count: usize) -> Array2<f64> {
        sample_noise(&mut self.rng, count, &self.config)
    }

    fn check_real(&self, real: &ArrayView2<'_, f64>) -> Result<()> {
        if real.ncols() != self.data_dim() {
            return Err(Error::Shape(format!(
                "real batch has width {}, discriminator expects {}",
                real.ncols(),
                self.data_dim()
            )));
        }
        Ok(())
    }

    /// Discriminator objective `V` with clamped probabilities.
    pub fn discriminator_objective(&self, real: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_real(&real)?;
        let fake = self.generator.forward(noise)?;
        let d_real = self.discriminator.forward(real)?;
        let d_fake = self.discriminator.forward(fake.view())?;
        Ok(value_function(
            d_real.as_slice().unwrap_or_default(),
            d_fake.as_slice().unwrap_or_default(),
        ))
    }

    /// Configured generator loss with clamped probabilities.
    pub fn generator_loss(&self, noise: ArrayView2<'_, f64>) -> Result<f64> {
        let fake = self.generator.forward(noise)?;
        let d_fake = self.discriminator.forward(fake.view())?;
        let m = noise.nrows().max(1) as f64;
        Ok(match self.config.generator_loss {
            GeneratorLoss::Saturating => d_fake.iter().map(|&p| clamped_ln(1.0 - p)).sum::<f64>() / m,
            GeneratorLoss::NonSaturating => -d_fake.iter().map(|&p| clamped_ln(p)).sum::<f64>() / m,
        })
    }

    /// Gradient of `V` with respect to the discriminator parameters.
    pub fn discriminator_gradients(
        &self,
        real: ArrayView2<'_, f64>,
        noise: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        self.check_real(&real)?;
        let fake = self.generator.forward(noise)?;
        let batch = concatenate(Axis(0), &[real, fake.view()]).map_err(|e| Error::Shape(e.to_string()))?;
        let trace = self.discriminator.trace(batch.view())?;
        let (n_real, n_fake) = (real.nrows(), noise.nrows());
        let mut d_logits = trace.logits().clone();
        for (i, mut row) in d_logits.rows_mut().into_iter().enumerate() {
            let z = row[0];
            row[0] = if i < n_real {
                (1.0 - sigmoid(z)) / n_real as f64
            } else {
                -sigmoid(z) / n_fake as f64
            };
        }
        Ok(self.discriminator.backward(&trace, d_logits).0)
    }

    /// Gradient of the configured generator loss with respect to the generator parameters.
    pub fn generator_gradients(&self, noise: ArrayView2<'_, f64>) -> Result<Gradients> {
        let g_trace = self.generator.trace(noise)?;
        let d_trace = self.discriminator.trace(g_trace.output().view())?;
        let m = noise.nrows().max(1) as f64;
        let loss = self.config.generator_loss;
        let d_logits = d_trace.logits().mapv(|z| match loss {
            GeneratorLoss::Saturating => -sigmoid(z) / m,
            GeneratorLoss::NonSaturating => -(1.0 - sigmoid(z)) / m,
        });
        let (_, d_fake) = self.discriminator.backward(&d_trace, d_logits);
        Ok(self.generator.backward(&g_trace, d_fake).0)
    }

    /// One discriminator ascent step with fresh noise; returns the pre-update objective.
    pub fn d_step(&mut self, real: ArrayView2<'_, f64>) -> Result<f64> {
        let noise = self.sample_noise(self.config.batch_size);
        self.d_step_with_noise(real, noise.view())
    }

    pub fn d_step_with_noise(&mut self, real: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<f64> {
        let objective = self.discriminator_objective(real, noise)?;
        if !objective.is_finite() {
            return Err(Error::Training("non-finite discriminator objective".into()));
        }
        let grads = self.discriminator_gradients(real, noise)?;
        self.d_opt.step(&mut self.discriminator, &grads, Direction::Ascend)?;
        self.d_steps += 1;
        Ok(objective)
    }

    /// One generator descent step with fresh noise; returns the pre-update loss.
    pub fn g_step(&mut self) -> Result<f64> {
        let noise = self.sample_noise(self.config.batch_size);
        self.g_step_with_noise(noise.view())
    }

    pub fn g_step_with_noise(&mut self, noise: ArrayView2<'_, f64>) -> Result<f64> {
        let loss = self.generator_loss(noise)?;
        if !loss.is_finite() {
            return Err(Error::Training("non-finite generator loss".into()));
        }
        let grads = self.generator_gradients(noise)?;
        self.g_opt.step(&mut self.generator, &grads, Direction::Descend)?;
        self.g_steps += 1;
        Ok(loss)
    }

    /// Minibatch of `batch_size` real rows: with replacement when there are
    /// fewer rows than the batch size, otherwise a random subset.
    fn real_batch(&mut self, positives: ArrayView2<'_, f64>) -> Array2<f64> {
        use rand::Rng;
        let n = positives.nrows();
        let m = self.config.batch_size;
        let idx: Vec<usize> = if n < m {
            (0..m).map(|_| self.rng.random_range(0..n)).collect()
        } else {
            rand::seq::index::sample(&mut self.rng, n, m).into_vec()
        };
        positives.select(Axis(0), &idx)
    }

    /// Runs `epochs` iterations of `k` discriminator steps and one generator step.
    ///
    /// `positives` are in feature space; the step methods work in network space,
    /// which differs only when `standardize` is set.
    pub fn train(&mut self, positives: ArrayView2<'_, f64>) -> Result<()> {
        if positives.nrows() == 0 {
            return Err(Error::Data("no samples for label".into()));
        }
        self.check_real(&positives)?;
        let normalized;
        let positives = if self.config.standardize {
            let shift = positives.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(positives.ncols()));
            let scale = positives.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
            normalized = (&positives - &shift) / &scale;
            self.shift = shift;
            self.scale = scale;
            normalized.view()
        } else {
            positives
        };
        for _ in 0..self.config.epochs {
            let mut d_total = 0.0;
            for _ in 0..self.config.k {
                let real = self.real_batch(positives);
                d_total += self.d_step(real.view())?;
            }
            let g_loss = self.g_step()?;
            self.log.push(GanEpoch {
                epoch: self.log.len(),
                d_objective: d_total / self.config.k as f64,
                g_loss,
            });
        }
        Ok(())
    }

    pub fn generate_features(&mut self, count: usize) -> Result<Array2<f64>> {
        if count == 0 {
            return Ok(Array2::zeros((0, self.data_dim())));
        }
        let noise = self.sample_noise(count);
        Ok(self.generator.forward(noise.view())? * &self.scale + &self.shift)
    }

    /// `count` generator outputs wrapped as pending samples of `label`.
    pub fn generate(&mut self, label: usize, count: usize, round: usize) -> Result<Vec<FlaggedSample>> {
        let features = self.generate_features(count)?;
        Ok(features
            .rows()
            .into_iter()
            .map(|row| FlaggedSample::pending(row.to_owned(), label, round))
            .collect())
    }

    /// `epoch,d_objective,g_loss` rows.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,d_objective,g_loss\n");
        for e in &self.log {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.d_objective, e.g_loss);
        }
        out
    }
}

/// Trains a fresh pair on the rows of one label.
pub fn train_gan(positives: ArrayView2<'_, f64>, config: &GanConfig) -> Result<GanPair> {
    if positives.nrows() == 0 {
        return Err(Error::Data("no samples for label".into()));
    }
    let mut gan = GanPair::new(positives.ncols(), config)?;
    gan.train(positives)?;
    Ok(gan)
}

/// Number of samples to synthesize: `ceil(fraction * current)`.
pub fn generation_count(fraction: f64, current: usize) -> usize {
    (fraction * current as f64).ceil() as usize
}
