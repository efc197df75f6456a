//! InfoNCE contrastive loss and its analytic gradient.

use super::vector::dot;
use super::NumericsError;

fn check_inputs(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
) -> Result<(), NumericsError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(NumericsError::BadTemperature { tau });
    }
    if negatives.is_empty() {
        return Err(NumericsError::EmptyNegatives);
    }
    for k in std::iter::once(k_pos).chain(negatives.iter().map(|v| v.as_slice())) {
        if k.len() != q.len() {
            return Err(NumericsError::DimMismatch {
                left: q.len(),
                right: k.len(),
            });
        }
    }
    Ok(())
}

/// Contrastive loss over one positive and K negatives:
/// `-log( exp(q·k⁺/τ) / Σᵢ exp(q·kⁱ/τ) )` where the sum runs over the
/// positive and all negatives.
///
/// Inputs are treated as free vectors (dot products, no re-normalization),
/// which keeps the loss differentiable in `q` for gradient checks.
pub fn info_nce(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
) -> Result<f64, NumericsError> {
    check_inputs(q, k_pos, negatives, tau)?;
    let s_pos = dot(q, k_pos) / tau;
    let mut logits = vec![s_pos];
    logits.extend(negatives.iter().map(|k| dot(q, k) / tau));
    // log-sum-exp, shifted for stability
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    Ok(lse - s_pos)
}

/// Analytic gradient of [`info_nce`] with respect to `q`.
pub fn info_nce_grad(
    q: &[f64],
    k_pos: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
) -> Result<Vec<f64>, NumericsError> {
    check_inputs(q, k_pos, negatives, tau)?;
    let mut logits = vec![dot(q, k_pos) / tau];
    logits.extend(negatives.iter().map(|k| dot(q, k) / tau));
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();

    // dL/dq = (1/τ) [ Σᵢ pᵢ kⁱ − k⁺ ], p = softmax over (k⁺, negatives)
    let mut grad = vec![0.0; q.len()];
    for (idx, k) in std::iter::once(k_pos)
        .chain(negatives.iter().map(|v| v.as_slice()))
        .enumerate()
    {
        let p = exps[idx] / z;
        for (g, kv) in grad.iter_mut().zip(k) {
            *g += p * kv / tau;
        }
    }
    for (g, kv) in grad.iter_mut().zip(k_pos) {
        *g -= kv / tau;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize, l: usize) -> Vec<f64> {
        let mut v = vec![0.0; l];
        v[i] = 1.0;
        v
    }

    #[test]
    fn aligned_positive_closed_form() {
        // q = k⁺ = e1, one negative e2: L = -log(e / (e + 1))
        let loss = info_nce(&e(0, 4), &e(0, 4), &[e(1, 4)], 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn adversarial_negative_closed_form() {
        // q = e1, k⁺ = e2, negative e1: L = log(1 + e)
        let loss = info_nce(&e(0, 4), &e(1, 4), &[e(0, 4)], 1.0).unwrap();
        assert!((loss - (1.0 + 1f64.exp()).ln()).abs() < 1e-12);
        assert!((loss - 1.31326).abs() < 1e-5);
    }

    #[test]
    fn symmetric_configuration_gives_log_two() {
        let loss = info_nce(&e(0, 4), &e(1, 4), &[e(2, 4)], 1.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_tau_and_empty_negatives() {
        assert!(info_nce(&e(0, 3), &e(0, 3), &[e(1, 3)], 0.0).is_err());
        assert!(info_nce(&e(0, 3), &e(0, 3), &[e(1, 3)], -1.0).is_err());
        assert!(info_nce(&e(0, 3), &e(0, 3), &[], 1.0).is_err());
    }

    #[test]
    fn loss_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let l = 8;
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let v: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect()
            };
            let q = draw(&mut rng);
            let kp = draw(&mut rng);
            let negs: Vec<Vec<f64>> = (0..5).map(|_| draw(&mut rng)).collect();
            assert!(info_nce(&q, &kp, &negs, 0.07).unwrap() > 0.0);
        }
    }

    #[test]
    fn grad_zero_along_q_at_symmetric_configuration() {
        // k⁺ and the negative both orthogonal to q: gradient has no q component.
        let grad = info_nce_grad(&e(0, 4), &e(1, 4), &[e(2, 4)], 1.0).unwrap();
        assert!(grad[0].abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 6;
        let h = 1e-6;
        for _ in 0..100 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let v: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect()
            };
            let q = draw(&mut rng);
            let kp = draw(&mut rng);
            let negs: Vec<Vec<f64>> = (0..4).map(|_| draw(&mut rng)).collect();
            let tau = rng.gen_range(0.05..1.0);
            let grad = info_nce_grad(&q, &kp, &negs, tau).unwrap();
            for i in 0..l {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = (info_nce(&qp, &kp, &negs, tau).unwrap()
                    - info_nce(&qm, &kp, &negs, tau).unwrap())
                    / (2.0 * h);
                let denom = grad[i].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad[i] - fd).abs() / denom < 1e-5,
                    "component {i}: analytic {} vs fd {}",
                    grad[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn grad_points_away_from_positive_above_minimum() {
        // Moving q toward k⁺ lowers the loss, so grad·k⁺ < 0.
        let grad = info_nce_grad(&e(0, 4), &e(1, 4), &[e(2, 4)], 1.0).unwrap();
        let inner: f64 = grad[1];
        assert!(inner < 0.0);
    }

    #[test]
    fn loss_decreases_as_positive_alignment_increases() {
        // Sweep q from orthogonal toward k⁺ with negatives fixed.
        let kp = e(0, 4);
        let negs = vec![e(2, 4), e(3, 4)];
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let t = step as f64 / 20.0;
            let raw = [t, 1.0 - t, 0.0, 0.0];
            let n = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
            let q: Vec<f64> = raw.iter().map(|x| x / n).collect();
            let loss = info_nce(&q, &kp, &negs, 0.5).unwrap();
            assert!(loss < prev, "loss must strictly decrease along the sweep");
            prev = loss;
        }
    }
}
