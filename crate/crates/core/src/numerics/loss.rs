use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy loss over softmax(logits) for a single true class.
///
/// Numerically stable via max subtraction. Returns the loss and the gradient
/// with respect to the logits (softmax - onehot).
pub fn softmax_cross_entropy(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::data(format!(
            "class index {} out of range for {} logits",
            class,
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = sum.ln() + max;
    let loss = log_sum - logits[class];
    let mut dlogits: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    dlogits[class] -= 1.0;
    Ok((loss, dlogits))
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn squared_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "squared_loss: pred has {} entries, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut dpred = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let diff = pred[i] - target[i];
        loss += diff * diff;
        dpred[i] = 2.0 * diff / n;
    }
    Ok((loss / n, dpred))
}

const KL_CLAMP: f64 = 1e-7;

/// KL-divergence sparsity penalty against a target mean activation `rho`.
///
/// penalty = sum_j rho*ln(rho/a_j) + (1-rho)*ln((1-rho)/(1-a_j)),
/// with activations clamped to [KL_CLAMP, 1-KL_CLAMP] before evaluation.
pub fn kl_sparsity(mean_activation: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::config(format!("rho must be in (0,1), got {rho}")));
    }
    let mut penalty = 0.0;
    let mut dact = vec![0.0; mean_activation.len()];
    for (j, &raw) in mean_activation.iter().enumerate() {
        if !(raw > -KL_CLAMP && raw < 1.0 + KL_CLAMP) {
            return Err(Error::numeric(format!(
                "activation {raw} outside (0,1) at index {j}"
            )));
        }
        let a = raw.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
        penalty += rho * (rho / a).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - a)).ln();
        dact[j] = -rho / a + (1.0 - rho) / (1.0 - a);
    }
    Ok((penalty, dact))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + eps;
            let up = f(&xp);
            xp[i] = x[i] - eps;
            let dn = f(&xp);
            xp[i] = x[i];
            g[i] = (up - dn) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn uniform_softmax_loss_is_ln_k() {
        let (loss, _) = softmax_cross_entropy(&[0.0, 0.0, 0.0], 1).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let (loss, d) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-9);
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn class_out_of_range_is_an_error() {
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let logits = vec![0.3, -1.2, 0.7, 0.05];
        let (_, d) = softmax_cross_entropy(&logits, 2).unwrap();
        let fd = finite_diff(
            |z| softmax_cross_entropy(z, 2).unwrap().0,
            &logits,
            1e-6,
        );
        for (a, b) in d.iter().zip(&fd) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn squared_loss_zero_when_equal() {
        let (loss, d) = squared_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn squared_loss_hand_case() {
        let (loss, d) = squared_loss(&[2.0], &[0.0]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(d, vec![4.0]);
    }

    #[test]
    fn squared_loss_gradient_matches_finite_differences() {
        let pred = vec![0.1, -0.8, 2.3];
        let target = vec![1.0, 0.5, -0.2];
        let (_, d) = squared_loss(&pred, &target).unwrap();
        let fd = finite_diff(|p| squared_loss(p, &target).unwrap().0, &pred, 1e-6);
        for (a, b) in d.iter().zip(&fd) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn kl_zero_at_target() {
        let (p, _) = kl_sparsity(&[0.05, 0.05], 0.05).unwrap();
        assert!(p.abs() < 1e-12);
    }

    #[test]
    fn kl_hand_value() {
        // 0.05*ln(0.05/0.5) + 0.95*ln(0.95/0.5)
        let expected = 0.05 * (0.1_f64).ln() + 0.95 * (1.9_f64).ln();
        let (p, _) = kl_sparsity(&[0.5], 0.05).unwrap();
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 0.4946).abs() < 1e-3);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let act = vec![0.2, 0.6, 0.35];
        let (_, d) = kl_sparsity(&act, 0.05).unwrap();
        let fd = finite_diff(|a| kl_sparsity(a, 0.05).unwrap().0, &act, 1e-6);
        for (a, b) in d.iter().zip(&fd) {
            assert!((a - b).abs() / b.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn kl_rejects_out_of_range() {
        assert!(kl_sparsity(&[1.5], 0.05).is_err());
        assert!(kl_sparsity(&[0.5], 1.5).is_err());
    }
}
