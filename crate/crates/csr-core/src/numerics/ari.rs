//! Adjusted Rand Index between two partitions.

use std::collections::HashMap;

use super::NumericsError;

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Pair-counting ARI from the contingency table of the two labelings.
///
/// 1.0 iff the partitions are identical up to relabeling; around 0 for
/// independent clusterings.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64, NumericsError> {
    if pred.len() != truth.len() {
        return Err(NumericsError::DimMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.len() < 2 {
        return Err(NumericsError::TooFewItems { len: pred.len() });
    }

    let mut contingency: HashMap<(usize, usize), u64> = HashMap::new();
    let mut pred_sizes: HashMap<usize, u64> = HashMap::new();
    let mut truth_sizes: HashMap<usize, u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *contingency.entry((p, t)).or_default() += 1;
        *pred_sizes.entry(p).or_default() += 1;
        *truth_sizes.entry(t).or_default() += 1;
    }

    let index: f64 = contingency.values().map(|&n| choose2(n)).sum();
    let sum_pred: f64 = pred_sizes.values().map(|&n| choose2(n)).sum();
    let sum_truth: f64 = truth_sizes.values().map(|&n| choose2(n)).sum();
    let total = choose2(pred.len() as u64);
    let expected = sum_pred * sum_truth / total;
    let max_index = 0.5 * (sum_pred + sum_truth);

    if (max_index - expected).abs() < 1e-12 {
        // Both partitions all-singletons or all-one-cluster: agreement is
        // total, conventionally ARI = 1.
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_permutation_gives_one() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn identical_partitions_give_one() {
        assert_eq!(adjusted_rand_index(&[0, 1, 2, 0, 1], &[0, 1, 2, 0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn crossed_partition_hand_computed() {
        // [0,0,1,1] vs [0,1,0,1]: over the 6 pairs, index = 0,
        // expected = (2 * 2) / 6, max = 2 → ARI = -0.5.
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((ari - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn singletons_vs_singletons_give_one() {
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[5, 6, 7]).unwrap(), 1.0);
    }

    #[test]
    fn invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            let base = adjusted_rand_index(&pred, &truth).unwrap();
            let relabeled: Vec<usize> = pred.iter().map(|&p| 9 - p).collect();
            let got = adjusted_rand_index(&relabeled, &truth).unwrap();
            assert!((base - got).abs() < 1e-12);
            assert!(base <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
    }
}
