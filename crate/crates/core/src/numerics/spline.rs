//! Quintic Hermite interpolation on a uniform grid with known first and
//! second derivatives at the nodes (C² interpolant).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTable {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub ddy: Vec<f64>,
}

impl HermiteTable {
    pub fn new(x: Vec<f64>, y: Vec<f64>, dy: Vec<f64>, ddy: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && y.len() == dy.len() && dy.len() == ddy.len());
        Self { x, y, dy, ddy }
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        *self.x.last().expect("non-empty")
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.x.len() - 1;
        let dx = (self.hi() - self.lo()) / n as f64;
        let mut i = (((x - self.lo()) / dx).floor().max(0.0) as usize).min(n - 1);
        // Guard against rounding in the uniform index estimate.
        while i > 0 && x < self.x[i] {
            i -= 1;
        }
        while i + 1 < n && x >= self.x[i + 1] {
            i += 1;
        }
        i
    }

    /// Value, first and second derivative. Caller keeps `x` in range.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let i = self.interval(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (y0, d0, s0) = (self.y[i], h * self.dy[i], h * h * self.ddy[i]);
        let (y1, d1, s1) = (self.y[i + 1], h * self.dy[i + 1], h * h * self.ddy[i + 1]);
        let c = [
            y0,
            d0,
            0.5 * s0,
            -10.0 * y0 - 6.0 * d0 - 1.5 * s0 + 10.0 * y1 - 4.0 * d1 + 0.5 * s1,
            15.0 * y0 + 8.0 * d0 + 1.5 * s0 - 15.0 * y1 + 7.0 * d1 - s1,
            -6.0 * y0 - 3.0 * d0 - 0.5 * s0 + 6.0 * y1 - 3.0 * d1 + 0.5 * s1,
        ];
        let mut p = 0.0;
        let mut dp = 0.0;
        let mut ddp = 0.0;
        for k in (0..6).rev() {
            ddp = ddp * t + dp * 2.0;
            dp = dp * t + p;
            p = p * t + c[k];
        }
        (p, dp / h, ddp / (h * h))
    }
}
