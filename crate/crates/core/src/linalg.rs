//! Small vector helpers shared across the crate.
//!
//! States and controls are plain `Vec<f64>`; dense matrices use
//! `nalgebra::DMatrix` where eigen/SVD machinery is needed.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// log-sum-exp with temperature `eps`, stabilised against overflow.
pub fn log_sum_exp(values: &[f64], eps: f64) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| ((v - m) / eps).exp()).sum();
    m + eps * s.ln()
}

/// Softmax weights matching [`log_sum_exp`].
pub fn softmax(values: &[f64], eps: f64) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| ((v - m) / eps).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter().map(|e| e / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_dominates_max() {
        let v = [0.3, -1.0, 0.7];
        let lse = log_sum_exp(&v, 1e-2);
        assert!(lse >= 0.7);
        assert!(lse <= 0.7 + 1e-2 * (3.0f64).ln() + 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let w = softmax(&[1.0, 2.0, 3.0], 0.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
