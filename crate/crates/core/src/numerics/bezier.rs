use serde::{Deserialize, Serialize};

/// Scalar Bezier polynomial on `s ∈ [0, 1]` (also evaluated slightly outside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bezier {
    pub coeffs: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_sum(c: &[f64], s: f64) -> f64 {
    let n = c.len() - 1;
    c.iter().enumerate().map(|(k, ck)| ck * binomial(n, k) * s.powi(k as i32) * (1.0 - s).powi((n - k) as i32)).sum()
}

impl Bezier {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(coeffs.len() >= 3, "need degree >= 2");
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `(B, dB/ds, d²B/ds²)`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let m = self.degree() as f64;
        let d1: Vec<f64> = self.coeffs.windows(2).map(|w| m * (w[1] - w[0])).collect();
        let d2: Vec<f64> = d1.windows(2).map(|w| (m - 1.0) * (w[1] - w[0])).collect();
        let dd = if d2.len() == 1 { d2[0] } else { bernstein_sum(&d2, s) };
        (bernstein_sum(&self.coeffs, s), bernstein_sum(&d1, s), dd)
    }
}
