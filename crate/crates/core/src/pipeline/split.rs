//! Seeded stratified partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledMatrix,
    pub test: LabeledMatrix,
    /// Row indices into the input, ascending.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Per-class training quotas by largest remainder, each class getting between
/// 1 and `count - 1` rows.
pub fn class_quotas(counts: &[usize], train_size: usize) -> Result<Vec<usize>> {
    let n: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if train_size >= n || train_size < present {
        return Err(Error::Config(format!(
            "train size {train_size} must be in [{present}, {n})"
        )));
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c == 1) {
        return Err(Error::Split { class, count });
    }

    let exact: Vec<f64> = counts
        .iter()
        .map(|&c| train_size as f64 * c as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = counts
        .iter()
        .zip(&exact)
        .map(|(&c, &q)| if c == 0 { 0 } else { (q.floor() as usize).clamp(1, c - 1) })
        .collect();
    let remainder = |quotas: &[usize], i: usize| exact[i] - quotas[i] as f64;

    let mut assigned: usize = quotas.iter().sum();
    while assigned < train_size {
        let best = (0..counts.len())
            .filter(|&i| counts[i] > 0 && quotas[i] < counts[i] - 1)
            .max_by(|&a, &b| remainder(&quotas, a).total_cmp(&remainder(&quotas, b)).then(b.cmp(&a)))
            .ok_or_else(|| Error::Config("train size leaves no test rows".into()))?;
        quotas[best] += 1;
        assigned += 1;
    }
    while assigned > train_size {
        let worst = (0..counts.len())
            .filter(|&i| quotas[i] > 1)
            .min_by(|&a, &b| remainder(&quotas, a).total_cmp(&remainder(&quotas, b)).then(a.cmp(&b)))
            .ok_or_else(|| Error::Config("train size too small for every class".into()))?;
        quotas[worst] -= 1;
        assigned -= 1;
    }
    Ok(quotas)
}

/// Draws `train_size` rows so that every class keeps its share, and returns the
/// rest as the test partition. Deterministic under `seed`.
pub fn stratified_split(data: &LabeledMatrix, train_size: usize, seed: u64) -> Result<Split> {
    let counts = data.class_counts();
    let quotas = class_quotas(&counts, train_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut train_indices = Vec::with_capacity(train_size);
    let mut test_indices = Vec::with_capacity(data.len() - train_size);
    for (class, &quota) in quotas.iter().enumerate() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        members.shuffle(&mut rng);
        train_indices.extend_from_slice(&members[..quota]);
        test_indices.extend_from_slice(&members[quota..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: data.select(&train_indices),
        test: data.select(&test_indices),
        train_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn labeled(counts: &[usize]) -> LabeledMatrix {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let features = Array2::from_shape_fn((labels.len(), 1), |(i, _)| i as f64);
        LabeledMatrix::new(features, labels, counts.len()).unwrap()
    }

    #[test]
    fn balanced_two_class() {
        for seed in 0..5 {
            let s = stratified_split(&labeled(&[50, 50]), 10, seed).unwrap();
            assert_eq!(s.train.class_counts(), vec![5, 5]);
            assert_eq!(s.test.len(), 90);
        }
    }

    #[test]
    fn table_two_class_counts() {
        let counts = [2003, 1047, 1070, 9707, 1070, 840, 1389, 779, 820, 550];
        let data = labeled(&counts);
        assert_eq!(data.len(), 19_275);
        let s = stratified_split(&data, 5000, 7).unwrap();
        assert_eq!(s.train.len(), 5000);
        assert_eq!(s.test.len(), 14_275);
        assert!(s.train.class_counts().iter().all(|&c| c > 0));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let data = labeled(&[30, 12, 5]);
        let a = stratified_split(&data, 20, 99).unwrap();
        let b = stratified_split(&data, 20, 99).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        let mut all: Vec<usize> = a.train_indices.iter().chain(&a.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
        let c = stratified_split(&data, 20, 100).unwrap();
        assert_ne!(a.train_indices, c.train_indices);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let err = stratified_split(&labeled(&[10, 1]), 5, 0).unwrap_err();
        assert!(matches!(err, Error::Split { class: 1, count: 1 }));
    }

    #[test]
    fn tiny_class_still_gets_one_training_row() {
        let q = class_quotas(&[1000, 2], 10).unwrap();
        assert_eq!(q, vec![9, 1]);
    }
}
