//! Margin operator, ramp loss and empirical ramp risk.

use crate::error::{usage, Result};

/// `v_y - max_{i≠y} v_i`.
pub fn margin_operator(logits: &[f64], label: usize) -> Result<f64> {
    if logits.len() < 2 || label >= logits.len() {
        return usage(format!("label {label} invalid for {} logits", logits.len()));
    }
    let other = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[label] - other)
}

/// `(1 + r/γ)` on `[-γ, 0]`, one for `r > 0`, zero below `-γ`.
pub fn ramp_loss(r: f64, gamma: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r >= -gamma {
        1.0 + r / gamma
    } else {
        0.0
    }
}

/// Mean ramp loss of the negated margins.
pub fn ramp_risk(logits: &[Vec<f64>], labels: &[usize], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return usage(format!("margin must be > 0, got {gamma}"));
    }
    if logits.len() != labels.len() || logits.is_empty() {
        return usage("logits and labels must be non-empty and of equal length");
    }
    let mut acc = 0.0;
    for (v, &y) in logits.iter().zip(labels) {
        acc += ramp_loss(-margin_operator(v, y)?, gamma);
    }
    Ok(acc / logits.len() as f64)
}

/// Fraction of samples whose margin is not positive.
pub fn error_rate(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return usage("logits and labels must be non-empty and of equal length");
    }
    let mut wrong = 0usize;
    for (v, &y) in logits.iter().zip(labels) {
        if margin_operator(v, y)? <= 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / logits.len() as f64)
}

/// Margins of all samples.
pub fn margins(logits: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    logits.iter().zip(labels).map(|(v, &y)| margin_operator(v, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(margin_operator(&[2.0, 0.0, 1.0], 0).unwrap(), 1.0);
        assert_eq!(margin_operator(&[2.0, 0.0, 1.0], 1).unwrap(), -2.0);
        let g = 0.8;
        assert_eq!(ramp_loss(-g / 2.0, g), 0.5);
        assert_eq!(ramp_loss(-2.0 * g, g), 0.0);
        assert_eq!(ramp_loss(0.1, g), 1.0);
        let logits = vec![vec![3.0, 0.0], vec![0.0, 2.5]];
        assert_eq!(ramp_risk(&logits, &[0, 1], 2.0).unwrap(), 0.0);
        assert!(ramp_risk(&logits, &[0, 1], 0.0).is_err());
    }

    #[test]
    fn risk_nondecreasing_in_margin() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let logits: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..3)).collect();
            let mut prev = 0.0;
            for k in 1..200 {
                let r = ramp_risk(&logits, &labels, k as f64 * 0.05).unwrap();
                assert!(r >= prev - 1e-15);
                prev = r;
            }
        }
    }
}
