#![allow(dead_code)]

//! Helpers shared by the integration tests and the acceptance runner.

use gids_core::neural::{one_hot, Activation, Gradients, Loss, Mlp};
use gids_core::store::FlaggedSample;
use gids_core::synthesizer::{GanConfig, GanPair};
use gids_core::{Flag, FlagSet, SampleStore};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so parameters whose gradient is
/// essentially zero are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct FdStats {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ±h nudge moved a ReLU across its kink.
    pub skipped: usize,
}

impl FdStats {
    pub fn merge(&mut self, other: FdStats) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Signs of every hidden pre-activation of `mlp` on `x`.
pub fn kink_pattern(mlp: &Mlp, x: &Array2<f64>) -> Vec<bool> {
    let trace = mlp.trace(x.view()).expect("trace");
    let pre = trace.pre_activations();
    pre[..pre.len() - 1].iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect()
}

/// Central differences of `eval` around `params`, compared with `analytic`.
/// `eval` returns the objective and the activation pattern at a parameter vector.
pub fn fd_compare(
    params: &[f64],
    analytic: &[f64],
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<bool>),
) -> FdStats {
    let (_, base) = eval(params);
    let mut stats = FdStats::default();
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let (plus, pat_plus) = eval(&p);
        p[i] = orig - FD_STEP;
        let (minus, pat_minus) = eval(&p);
        p[i] = orig;
        if pat_plus != base || pat_minus != base {
            stats.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        stats.max_rel_error = stats.max_rel_error.max(rel_error(analytic[i], numeric));
        stats.checked += 1;
    }
    stats
}

/// Loss gradient check of an MLP with a softmax/cross-entropy or
/// sigmoid/binary cross-entropy head on a random batch.
pub fn check_mlp(dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 6;
    let x = gaussian(&mut rng, rows, dims[0]);
    let out = *dims.last().unwrap();
    let (loss, targets) = match output {
        Activation::Softmax => {
            let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..out)).collect();
            (Loss::CrossEntropy, one_hot(&labels, out))
        }
        Activation::Sigmoid => (
            Loss::BinaryCrossEntropy,
            Array2::from_shape_simple_fn((rows, out), || f64::from(rng.random_bool(0.5) as u8)),
        ),
        other => panic!("no loss pairs with a {other} head"),
    };
    let mut mlp = Mlp::new(dims, hidden, output, seed).expect("mlp");
    let (_, grads) = mlp.loss_and_gradients(x.view(), targets.view(), loss).expect("grads");
    let params = mlp.params();
    fd_compare(&params, &grads.to_flat(), |p| {
        mlp.set_params(p).expect("set params");
        let value = mlp.loss(x.view(), targets.view(), loss).expect("loss");
        let pattern = if hidden == Activation::Relu { kink_pattern(&mlp, &x) } else { Vec::new() };
        (value, pattern)
    })
}

fn gan_fixture(data_dim: usize, seed: u64) -> (GanPair, Array2<f64>, Array2<f64>) {
    let config = GanConfig {
        hidden_layers: vec![16, 12],
        seed,
        ..GanConfig::default()
    };
    let gan = GanPair::new(data_dim, &config).expect("gan");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let real = gaussian(&mut rng, 7, data_dim);
    let noise = gaussian(&mut rng, 5, config.noise_dim);
    (gan, real, noise)
}

/// Discriminator-half check: gradient of `V` with respect to D's parameters.
pub fn check_discriminator(data_dim: usize, seed: u64) -> FdStats {
    let (mut gan, real, noise) = gan_fixture(data_dim, seed);
    let grads: Gradients = gan.discriminator_gradients(real.view(), noise.view()).expect("grads");
    let fake = gan.generator.forward(noise.view()).expect("fake");
    let batch = concatenate(Axis(0), &[real.view(), fake.view()]).expect("batch");
    let params = gan.discriminator.params();
    fd_compare(&params, &grads.to_flat(), |p| {
        gan.discriminator.set_params(p).expect("set params");
        let v = gan.discriminator_objective(real.view(), noise.view()).expect("objective");
        (v, kink_pattern(&gan.discriminator, &batch))
    })
}

/// Generator-half check: gradient of the generator loss with respect to G's parameters.
pub fn check_generator(data_dim: usize, seed: u64) -> FdStats {
    let (mut gan, _, noise) = gan_fixture(data_dim, seed);
    let grads = gan.generator_gradients(noise.view()).expect("grads");
    let params = gan.generator.params();
    fd_compare(&params, &grads.to_flat(), |p| {
        gan.generator.set_params(p).expect("set params");
        let v = gan.generator_loss(noise.view()).expect("loss");
        let fake = gan.generator.forward(noise.view()).expect("fake");
        let mut pattern = kink_pattern(&gan.generator, &noise);
        pattern.extend(kink_pattern(&gan.discriminator, &fake));
        (v, pattern)
    })
}

/// The 20 MLP shapes of the gradient suite: the detector shape plus random ones.
pub fn gradient_shapes(seed: u64) -> Vec<(Vec<usize>, Activation, Activation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = vec![(vec![20, 50, 50, 10], Activation::Relu, Activation::Softmax)];
    let hidden = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];
    while shapes.len() < 20 {
        let depth = rng.random_range(1..=3);
        let mut dims = vec![rng.random_range(1..=12)];
        dims.extend((0..depth).map(|_| rng.random_range(1..=16)));
        let output = if rng.random_bool(0.5) { Activation::Softmax } else { Activation::Sigmoid };
        dims.push(rng.random_range(if output == Activation::Softmax { 2 } else { 1 }..=6));
        shapes.push((dims, hidden[rng.random_range(0..hidden.len())], output));
    }
    shapes
}

/// One operation on a [`SampleStore`].
#[derive(Debug, Clone)]
pub enum StoreOp {
    InsertOriginal { label: usize, n: usize },
    InsertPending { label: usize, n: usize, round: usize },
    /// A batch containing a forbidden sample; must be refused as a whole.
    InsertInvalid { label: usize },
    Commit { label: usize },
    Reject { label: usize },
    RoundTrip,
}

pub fn random_ops(rng: &mut ChaCha8Rng, classes: usize, len: usize) -> Vec<StoreOp> {
    (0..len)
        .map(|_| {
            let label = rng.random_range(0..classes);
            match rng.random_range(0..12) {
                0..=2 => StoreOp::InsertOriginal { label, n: rng.random_range(0..4) },
                3..=6 => StoreOp::InsertPending {
                    label,
                    n: rng.random_range(0..5),
                    round: rng.random_range(1..4),
                },
                7 => StoreOp::InsertInvalid { label },
                8 | 9 => StoreOp::Commit { label },
                10 => StoreOp::Reject { label },
                _ => StoreOp::RoundTrip,
            }
        })
        .collect()
}

/// Applies `ops` to a fresh store and to a plain-vector model of it and
/// returns every invariant violation observed.
pub fn check_store_sequence(ops: &[StoreOp], classes: usize, dim: usize) -> Vec<String> {
    let mut store = SampleStore::new(dim, classes);
    let mut model: Vec<FlaggedSample> = Vec::new();
    let mut next_value = 0.0;
    let mut violations = Vec::new();
    let mut fresh = |n: usize, label: usize, flag: Flag, round: usize| -> Vec<FlaggedSample> {
        (0..n)
            .map(|_| {
                next_value += 1.0;
                FlaggedSample {
                    features: Array1::from_elem(dim, next_value),
                    label,
                    flag,
                    round,
                }
            })
            .collect()
    };
    for (step, op) in ops.iter().enumerate() {
        let synthetic_before = store.count(None, FlagSet::of(&[Flag::Synthetic]));
        let originals_before = store.view(FlagSet::of(&[Flag::Original]), None);
        match op {
            StoreOp::InsertOriginal { label, n } => {
                let batch = fresh(*n, *label, Flag::Original, 0);
                model.extend(batch.clone());
                if let Err(e) = store.insert(batch) {
                    violations.push(format!("step {step}: valid insert refused: {e}"));
                }
            }
            StoreOp::InsertPending { label, n, round } => {
                let batch = fresh(*n, *label, Flag::Pending, *round);
                model.extend(batch.clone());
                if let Err(e) = store.insert(batch) {
                    violations.push(format!("step {step}: valid insert refused: {e}"));
                }
            }
            StoreOp::InsertInvalid { label } => {
                let mut batch = fresh(1, *label, Flag::Pending, 1);
                batch.extend(fresh(1, *label, Flag::Synthetic, 1));
                let before = store.clone();
                if store.insert(batch).is_ok() {
                    violations.push(format!("step {step}: synthetic insert accepted"));
                }
                if store != before {
                    violations.push(format!("step {step}: refused insert changed the store"));
                }
            }
            StoreOp::Commit { label } => {
                let expected = model.iter().filter(|s| s.flag == Flag::Pending && s.label == *label).count();
                for s in model.iter_mut().filter(|s| s.flag == Flag::Pending && s.label == *label) {
                    s.flag = Flag::Synthetic;
                }
                let n = store.commit_pending(*label);
                if n != expected {
                    violations.push(format!("step {step}: commit moved {n}, expected {expected}"));
                }
            }
            StoreOp::Reject { label } => {
                let expected = model.iter().filter(|s| s.flag == Flag::Pending && s.label == *label).count();
                model.retain(|s| !(s.flag == Flag::Pending && s.label == *label));
                let n = store.reject_pending(*label);
                if n != expected {
                    violations.push(format!("step {step}: reject removed {n}, expected {expected}"));
                }
            }
            StoreOp::RoundTrip => match SampleStore::from_text(&store.to_text()) {
                Ok(back) if back == store => {}
                Ok(_) => violations.push(format!("step {step}: text round trip changed the store")),
                Err(e) => violations.push(format!("step {step}: text round trip failed: {e}")),
            },
        }
        violations.extend(store_invariants(&store, &model, step));
        if let StoreOp::Commit { label } | StoreOp::Reject { label } = op {
            if store.pending_count(*label) != 0 {
                violations.push(format!("step {step}: label {label} still has pending samples"));
            }
        }
        if store.count(None, FlagSet::of(&[Flag::Synthetic])) < synthetic_before {
            violations.push(format!("step {step}: synthetic samples disappeared"));
        }
        let originals_after = store.view(FlagSet::of(&[Flag::Original]), None);
        if originals_after.features.slice(ndarray::s![..originals_before.len(), ..]) != originals_before.features {
            violations.push(format!("step {step}: original samples changed"));
        }
    }
    violations
}

fn store_invariants(store: &SampleStore, model: &[FlaggedSample], step: usize) -> Vec<String> {
    let mut out = Vec::new();
    if store.samples() != model {
        out.push(format!("step {step}: store diverged from the model"));
    }
    let hybrid = store.hybrid();
    let expected: Vec<&FlaggedSample> = model.iter().filter(|s| s.flag != Flag::Pending).collect();
    if hybrid.len() != expected.len()
        || hybrid
            .labels
            .iter()
            .zip(&expected)
            .enumerate()
            .any(|(i, (&l, s))| l != s.label || hybrid.row(i) != s.features)
    {
        out.push(format!("step {step}: hybrid view is not original + synthetic in order"));
    }
    for s in store.samples() {
        if (s.flag == Flag::Original) != (s.round == 0) {
            out.push(format!("step {step}: {} sample with round {}", s.flag, s.round));
        }
    }
    let total: usize = [Flag::Original, Flag::Pending, Flag::Synthetic]
        .iter()
        .map(|f| store.count(None, FlagSet::of(&[*f])))
        .sum();
    if total != store.len() || store.count(None, FlagSet::ALL) != store.len() {
        out.push(format!("step {step}: flag counts do not partition the store"));
    }
    out
}

/// Random correlated dataset: standard normal scores mixed by a random matrix
/// whose columns decay in scale, so the covariance spectrum is well separated.
pub fn correlated_dataset(seed: u64, n: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = gaussian(&mut rng, n, dim);
    let mut mix = gaussian(&mut rng, dim, dim);
    for (j, mut col) in mix.columns_mut().into_iter().enumerate() {
        col *= 0.9f64.powi(j as i32);
    }
    z.dot(&mix) + 3.0
}

#[derive(Debug, Clone, Copy)]
pub struct PcaComparison {
    pub ratio_error: f64,
    pub projection_error: f64,
}

/// Fits [`gids_core::pipeline::pca::Pca`] and compares it with nalgebra's
/// symmetric eigendecomposition of an independently computed covariance.
pub fn pca_against_oracle(data: &Array2<f64>, keep: usize) -> PcaComparison {
    use gids_core::pipeline::pca::Pca;
    use nalgebra::{DMatrix, SymmetricEigen};

    let (n, d) = data.dim();
    let pca = Pca::fit(data.view(), keep).expect("pca fit");
    let projected = pca.project(data.view()).expect("project");

    let x = DMatrix::from_fn(n, d, |i, j| data[[i, j]]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let ratios = pca.full_explained_variance_ratios();
    let ratio_error = order
        .iter()
        .zip(&ratios)
        .map(|(&k, r)| (eig.eigenvalues[k].max(0.0) / total - r).abs())
        .fold(0.0, f64::max);

    let mut projection_error = 0.0f64;
    for (c, &k) in order.iter().take(keep).enumerate() {
        let v = eig.eigenvectors.column(k);
        let oracle: Vec<f64> = (0..n).map(|i| centered.row(i).dot(&v.transpose())).collect();
        let ours = projected.column(c);
        let agree: f64 = oracle.iter().zip(ours.iter()).map(|(a, b)| a * b).sum();
        let sign = if agree < 0.0 { -1.0 } else { 1.0 };
        for (a, b) in oracle.iter().zip(ours.iter()) {
            projection_error = projection_error.max((sign * a - b).abs());
        }
    }
    PcaComparison {
        ratio_error,
        projection_error,
    }
}

/// Per-class one-vs-rest counts by direct enumeration of every pair.
pub fn brute_force_counts(preds: &[usize], truths: &[usize], classes: usize) -> Vec<[usize; 4]> {
    (0..classes)
        .map(|c| {
            let mut tp_fp_tn_fn = [0usize; 4];
            for (&p, &t) in preds.iter().zip(truths) {
                let slot = match (p == c, t == c) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                };
                tp_fp_tn_fn[slot] += 1;
            }
            tp_fp_tn_fn
        })
        .collect()
}

/// True when `confusion()` and its derived counts agree exactly with the
/// brute-force oracle on one random instance.
pub fn confusion_matches_oracle(seed: u64) -> bool {
    use gids_core::metrics::confusion;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..=10);
    let n = rng.random_range(1..=300);
    let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let cm = confusion(&preds, &truths, classes).expect("confusion");
    let oracle = brute_force_counts(&preds, &truths, classes);
    let cells_match = (0..classes).all(|t| {
        (0..classes).all(|p| cm.get(t, p) == preds.iter().zip(&truths).filter(|&(&a, &b)| a == p && b == t).count())
    });
    cells_match
        && cm.total() == n
        && oracle.iter().enumerate().all(|(c, o)| {
            let k = cm.class_counts(c);
            [k.tp, k.fp, k.tn, k.fn_] == *o
        })
}

/// Predictions and truths for a binary problem with the given counts; class 1 is positive.
pub fn binary_instance(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<usize>, Vec<usize>) {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (n, p, t) in [(tp, 1, 1), (fp, 1, 0), (fn_, 0, 1), (tn, 0, 0)] {
        preds.extend(std::iter::repeat_n(p, n));
        truths.extend(std::iter::repeat_n(t, n));
    }
    (preds, truths)
}

pub const MOMENT_MEAN: [f64; 2] = [2.0, -1.0];
pub const MOMENT_STD: f64 = 0.5;

/// GAN settings of the moment-matching check.
pub fn moment_gan_config(seed: u64) -> GanConfig {
    GanConfig {
        epochs: 2000,
        learning_rate: 0.002,
        momentum: 0.5,
        k: 2,
        seed,
        ..GanConfig::default()
    }
}

/// Trains on 500 draws of N(MOMENT_MEAN, MOMENT_STD² I) and returns the mean
/// and per-dimension standard deviation of 5000 generated rows.
pub fn gan_moments(seed: u64, config: &GanConfig) -> ([f64; 2], [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let mut real = gaussian(&mut rng, 500, 2) * MOMENT_STD;
    for (j, mut col) in real.columns_mut().into_iter().enumerate() {
        col += MOMENT_MEAN[j];
    }
    let mut gan = gids_core::synthesizer::train_gan(real.view(), config).expect("train");
    let out = gan.generate_features(5000).expect("generate");
    let mean = out.mean_axis(Axis(0)).expect("mean");
    let std = out.std_axis(Axis(0), 0.0);
    ([mean[0], mean[1]], [std[0], std[1]])
}

pub fn moments_ok(mean: [f64; 2], std: [f64; 2]) -> bool {
    (0..2).all(|j| (mean[j] - MOMENT_MEAN[j]).abs() <= 0.15 && (std[j] - MOMENT_STD).abs() <= 0.2)
}
