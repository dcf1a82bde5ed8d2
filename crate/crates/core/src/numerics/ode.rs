//! Dormand–Prince 5(4) with Hairer's fourth-order dense output.

#![allow(clippy::needless_range_loop)] // stage loops read clearer indexed

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.r[0][i] + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
        y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12 }
    }
}

/// Adaptive stepper holding the current point and FSAL derivative.
pub struct Dopri5<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    k1: [f64; N],
    h: f64,
    tol: Tolerances,
    pub h_max: f64,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl<const N: usize> Dopri5<N> {
    pub fn new<F>(f: &mut F, t: f64, y: [f64; N], tol: Tolerances) -> Result<Self>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let k1 = f(t, &y)?;
        let mut s = Self { t, y, k1, h: 0.0, tol, h_max: f64::INFINITY };
        s.h = s.initial_step(f)?;
        Ok(s)
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    fn initial_step<F>(&self, f: &mut F) -> Result<f64>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let f1 = f(self.t + h0, &y1)?;
        let mut d2 = 0.0;
        for i in 0..N {
            d2 += ((f1[i] - self.k1[i]) / self.scale(self.y[i], self.y[i])).powi(2);
        }
        let d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        Ok((100.0 * h0).min(h1))
    }

    /// Take one accepted step, never past `t_end`.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64) -> Result<DenseStep<N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let mut rejected = 0;
        loop {
            let mut h = self.h.min(self.h_max);
            let last = self.t + h >= t_end;
            if last {
                h = t_end - self.t;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::IntegratorFailure(format!("step size underflow at t = {}", self.t)));
            }
            let (t, y, k1) = (self.t, &self.y, &self.k1);
            let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
            let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = f(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y1)?;

            let mut err = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err += (e / self.scale(y[i], y1[i])).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::IntegratorFailure(format!("non-finite error at t = {t}")));
            }
            let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            if err <= 1.0 {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - h * k7[i] - bspl;
                    r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = DenseStep { t0: t, h, r };
                self.t = if last { t_end } else { t + h };
                self.y = y1;
                self.k1 = k7;
                let grow = if rejected > 0 { fac.min(1.0) } else { fac };
                self.h = h * grow;
                return Ok(dense);
            }
            rejected += 1;
            if rejected > 60 {
                return Err(Error::IntegratorFailure(format!("too many rejections at t = {t}")));
            }
            self.h = h * fac.min(1.0);
        }
    }
}

/// Integrate to `t_end` and return the final state.
pub fn integrate<const N: usize, F>(mut f: F, t0: f64, y0: [f64; N], t_end: f64, tol: Tolerances) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut s = Dopri5::new(&mut f, t0, y0, tol)?;
    while s.t < t_end {
        s.step(&mut f, t_end)?;
    }
    Ok(s.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y: &[f64; 1]| Ok([-2.0 * y[0]]), 0.0, [1.0], 3.0, Tolerances::default()).unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let mut f = |_: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let mut s = Dopri5::new(&mut f, 0.0, [1.0, 0.0], Tolerances::default()).unwrap();
        let mut worst = 0.0f64;
        while s.t < 10.0 {
            let d = s.step(&mut f, 10.0).unwrap();
            for k in 0..=10 {
                let t = d.t0 + d.h * k as f64 / 10.0;
                let y = d.eval(t);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
        }
        assert!(worst < 1e-9, "dense output error {worst}");
    }

    #[test]
    fn tolerance_refinement_converges() {
        let f = |t: f64, y: &[f64; 1]| Ok([y[0] * t.cos()]);
        let exact = 2.0f64.sin().exp();
        let coarse = integrate(f, 0.0, [1.0], 2.0, Tolerances { rtol: 1e-6, atol: 1e-8 }).unwrap();
        let fine = integrate(f, 0.0, [1.0], 2.0, Tolerances::default()).unwrap();
        assert!((fine[0] - exact).abs() < (coarse[0] - exact).abs());
        assert!((fine[0] - exact).abs() < 1e-9);
    }
}
