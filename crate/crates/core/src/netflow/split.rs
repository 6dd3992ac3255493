use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    /// Classes (0 benign, 1 attack) that had no samples at all.
    pub empty_classes: Vec<u8>,
}

/// Class-stratified train/test split.
///
/// Each class contributes `round(n_c * train_fraction)` samples to the train
/// side. Both sides keep the input order.
pub fn stratified_split<T: Clone>(
    data: &[T],
    label_of: impl Fn(&T) -> u8,
    train_fraction: f64,
    seed: u64,
) -> Result<Split<T>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.len()];
    let mut empty_classes = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| label_of(&data[i]) == class).collect();
        if idx.is_empty() {
            warn!("class {class} has no samples; absent from both splits");
            empty_classes.push(class);
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (item, &t) in data.iter().zip(&in_train) {
        if t {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok(Split { train, test, empty_classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_and_ten() {
        let data: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let s = stratified_split(&data, |&l| l, 0.7, 1).unwrap();
        assert_eq!(s.train.iter().filter(|&&l| l == 1).count(), 7);
        assert_eq!(s.train.iter().filter(|&&l| l == 0).count(), 7);
        assert_eq!(s.test.len(), 6);
        let again = stratified_split(&data, |&l| l, 0.7, 1).unwrap();
        assert_eq!(s.train, again.train);
    }

    #[test]
    fn empty_class_reported() {
        let data = vec![1u8; 10];
        let s = stratified_split(&data, |&l| l, 0.5, 0).unwrap();
        assert_eq!(s.empty_classes, vec![0]);
        assert_eq!(s.train.len(), 5);
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(stratified_split(&[0u8], |&l| l, 1.0, 0).is_err());
        assert!(stratified_split(&[0u8], |&l| l, 0.0, 0).is_err());
    }

    #[test]
    fn preserves_attack_prevalence() {
        // 1,379,274 flows of which 1,108,995 are attacks.
        let n = 1_379_274usize;
        let attacks = 1_108_995usize;
        let data: Vec<u8> = (0..n).map(|i| u8::from(i < attacks)).collect();
        let s = stratified_split(&data, |&l| l, 0.7, 42).unwrap();
        let rate = |v: &[u8]| v.iter().filter(|&&l| l == 1).count() as f64 / v.len() as f64;
        let full = attacks as f64 / n as f64;
        assert!((rate(&s.train) - full).abs() < 1e-5);
        assert!((rate(&s.test) - full).abs() < 1e-5);
        assert!((full - 0.804).abs() < 5e-4);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(labels in proptest::collection::vec(0u8..2, 0..200), frac in 0.05f64..0.95, seed: u64) {
            let data: Vec<(usize, u8)> = labels.iter().copied().enumerate().collect();
            let s = stratified_split(&data, |d| d.1, frac, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).map(|d| d.0).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
            for class in [0u8, 1] {
                let n = labels.iter().filter(|&&l| l == class).count() as f64;
                let tr = s.train.iter().filter(|d| d.1 == class).count() as f64;
                prop_assert!((tr - n * frac).abs() <= 1.0);
            }
        }
    }
}
