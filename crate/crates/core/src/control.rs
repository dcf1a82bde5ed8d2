//! Two-level tracking law.
//!
//! The inner loop inverts the decoupling matrix so that `ḧ_r = v_r` and
//! `q̈_N = v_N`. The outer loop drives `h_r` to zero with a PD law and makes
//! `c` decay at rate `β₀` while bleeding the momentum error `b`.

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dyn_terms, vel_from_omega, DynTerms, GenVel, RobotParams, State};
use crate::error::{Error, Result};
use crate::gait::GaitSpec;

/// Largest decoupling-matrix condition number accepted.
pub const MAX_DECOUPLING_COND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub kp: f64,
    pub kv: f64,
    pub beta0: f64,
    /// Momentum-error coupling. Zero is accepted to study the uncoupled case.
    pub gamma: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 100.0, kv: 15.0, beta0: 4.5, gamma: 0.35 }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kp > 0.0 && self.kv > 0.0 && self.beta0 > 0.0 && self.gamma >= 0.0;
        if !(ok && self.kp.is_finite() && self.kv.is_finite() && self.beta0.is_finite() && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gains must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { kp: self.kp * k, kv: self.kv * k, beta0: self.beta0 * k, gamma: self.gamma * k }
    }

    /// `γ/β₀`.
    pub fn coupling(&self) -> f64 {
        self.gamma / self.beta0
    }

    /// Roots of `s² − K_V s + K_P`, i.e. decay rates of `ḧ + K_V ḣ + K_P h = 0`.
    pub fn alphas(&self) -> (Complex64, Complex64) {
        let disc = Complex64::new(self.kv * self.kv - 4.0 * self.kp, 0.0).sqrt();
        ((self.kv + disc) / 2.0, (self.kv - disc) / 2.0)
    }
}

/// Transverse coordinates `y = (h_r, ḣ_r, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct YState {
    pub hr: f64,
    pub dhr: f64,
    pub b: f64,
    pub c: f64,
}

impl YState {
    pub fn to_array(self) -> [f64; 4] {
        [self.hr, self.dhr, self.b, self.c]
    }
    pub fn from_array(a: [f64; 4]) -> Self {
        Self { hr: a[0], dhr: a[1], b: a[2], c: a[3] }
    }
    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `(h_r, ḣ_r)`.
pub fn output_h(g: &GaitSpec, x: &State) -> Result<(f64, f64)> {
    let (h, dh, _) = g.href(x.q.qn)?;
    Ok((x.q.qr - h, x.w.dqr - dh * x.w.dqn))
}

pub fn bc_coords(g: &GaitSpec, gains: &Gains, x: &State) -> Result<YState> {
    let (hr, dhr) = output_h(g, x)?;
    let (s, ds, _) = g.momentum_profile(x.q.qn)?;
    let (v, _) = g.speed(x.q.qn)?;
    let b = x.w.sigma - s;
    Ok(YState { hr, dhr, b, c: x.w.dqn - v - gains.coupling() * ds * b })
}

pub fn v_r(gains: &Gains, hr: f64, dhr: f64) -> f64 {
    -gains.kp * hr - gains.kv * dhr
}

pub fn v_n(p: &RobotParams, g: &GaitSpec, gains: &Gains, x: &State) -> Result<f64> {
    let qn = x.q.qn;
    let dqn = x.w.dqn;
    let (v, dv) = g.speed(qn)?;
    let (s, ds, dds) = g.momentum_profile(qn)?;
    let b = x.w.sigma - s;
    // σ̇_N = −G_N along the model.
    let g_n = crate::dynamics::gravity(p, x.q.qr, qn)[2];
    let b_dot = -g_n - ds * dqn;
    Ok(dv * dqn + gains.gamma * ds * b - gains.beta0 * (dqn - v) + gains.coupling() * (dds * dqn * b + ds * b_dot))
}

fn decouple(t: &DynTerms, v: &GenVel, slope: f64, curv: f64, cmd: Vector2<f64>) -> Result<[f64; 2]> {
    let jac = Matrix2x3::new(0.0, 1.0, -slope, 0.0, 0.0, 1.0);
    let chol = t.d.cholesky().ok_or(Error::SingularDecoupling(f64::INFINITY))?;
    let a: Matrix2<f64> = jac * chol.solve(&t.b);
    let sv = a.singular_values();
    let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(cond < MAX_DECOUPLING_COND) {
        return Err(Error::SingularDecoupling(cond));
    }
    let drift = jac * chol.solve(&(-t.c * v.to_vector() - t.g)) + Vector2::new(-curv * v.dqn * v.dqn, 0.0);
    let u = a.lu().solve(&(cmd - drift)).ok_or(Error::SingularDecoupling(cond))?;
    Ok([u[0], u[1]])
}

/// Torques giving `ḧ_r = v[0]` and `q̈_N = v[1]` on the model `p`.
pub fn feedback_linearize(p: &RobotParams, g: &GaitSpec, x: &State, v: [f64; 2]) -> Result<[f64; 2]> {
    let vel = vel_from_omega(p, &x.q, &x.w)?;
    let (_, slope, curv) = g.href(x.q.qn)?;
    decouple(&dyn_terms(p, &x.q, &vel), &vel, slope, curv, Vector2::new(v[0], v[1]))
}

/// Everything the controller computes at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: [f64; 2],
    pub y: YState,
    pub v: [f64; 2],
}

/// Controller context: nominal model, gait and gains.
#[derive(Debug, Clone)]
pub struct Controller {
    pub params: RobotParams,
    pub gait: GaitSpec,
    pub gains: Gains,
}

impl Controller {
    pub fn new(params: RobotParams, gait: GaitSpec, gains: Gains) -> Self {
        Self { params, gait, gains }
    }

    /// Full law at a state expressed with the controller's own model.
    pub fn control(&self, x: &State) -> Result<ControlOutput> {
        let y = bc_coords(&self.gait, &self.gains, x)?;
        let v = [v_r(&self.gains, y.hr, y.dhr), v_n(&self.params, &self.gait, &self.gains, x)?];
        let u = feedback_linearize(&self.params, &self.gait, x, v)?;
        Ok(ControlOutput { u, y, v })
    }

    pub fn y_of(&self, x: &State) -> Result<YState> {
        bc_coords(&self.gait, &self.gains, x)
    }
}
