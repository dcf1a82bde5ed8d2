//! Closed-form Lagrangian model of the pinned three-link walker.
//!
//! Coordinates are `q = (q_d, q_r, q_N)`: disc angle measured from the leg
//! bisector, swing-minus-stance inter-leg angle, and stance-leg angle from
//! the vertical (CCW positive). Expressions were generated offline by
//! `scripts/derive_dynamics.py`.

use nalgebra::{Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Leg length `L` (m).
    pub leg_length: f64,
    /// Mass of each leg `m_l` (kg).
    pub leg_mass: f64,
    /// Distance from the hip to a leg's centre of mass `l_c` (m).
    pub leg_com_dist: f64,
    /// Leg inertia about its centre of mass `I_l` (kg m²).
    pub leg_inertia: f64,
    /// Hip point mass including the disc `m_h` (kg).
    pub hip_mass: f64,
    /// Disc inertia `J_d` (kg m²).
    pub disc_inertia: f64,
    /// Gravity (m/s²).
    pub gravity: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            leg_length: 1.0,
            leg_mass: 5.0,
            leg_com_dist: 0.5,
            leg_inertia: 5.0 / 12.0,
            hip_mass: 10.0,
            disc_inertia: 0.5,
            gravity: 9.81,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("leg_length", self.leg_length),
            ("leg_mass", self.leg_mass),
            ("leg_com_dist", self.leg_com_dist),
            ("leg_inertia", self.leg_inertia),
            ("hip_mass", self.hip_mass),
            ("disc_inertia", self.disc_inertia),
            ("gravity", self.gravity),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.leg_com_dist > self.leg_length {
            return Err(Error::InvalidParams("leg_com_dist exceeds leg_length".into()));
        }
        Ok(())
    }
}

/// Generalized positions `(q_d, q_r, q_N)` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenPos {
    pub qd: f64,
    pub qr: f64,
    pub qn: f64,
}

impl GenPos {
    pub fn new(qd: f64, qr: f64, qn: f64) -> Self {
        Self { qd, qr, qn }
    }
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.qd, self.qr, self.qn)
    }
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Generalized velocities `(q̇_d, q̇_r, q̇_N)` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenVel {
    pub dqd: f64,
    pub dqr: f64,
    pub dqn: f64,
}

impl GenVel {
    pub fn new(dqd: f64, dqr: f64, dqn: f64) -> Self {
        Self { dqd, dqr, dqn }
    }
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.dqd, self.dqr, self.dqn)
    }
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Velocity-like coordinates `ω = (σ_N, q̇_r, q̇_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Omega {
    /// Angular momentum about the stance foot.
    pub sigma: f64,
    pub dqr: f64,
    pub dqn: f64,
}

impl Omega {
    pub fn new(sigma: f64, dqr: f64, dqn: f64) -> Self {
        Self { sigma, dqr, dqn }
    }
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.sigma, self.dqr, self.dqn)
    }
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Full hybrid-system state `(q, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub q: GenPos,
    pub w: Omega,
}

/// `D q̈ + C q̇ + G = B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynTerms {
    pub d: Matrix3<f64>,
    pub c: Matrix3<f64>,
    pub g: Vector3<f64>,
    pub b: Matrix3x2<f64>,
}

/// Inertia matrix; depends on `q_r` only.
pub fn mass_matrix(p: &RobotParams, qr: f64) -> Matrix3<f64> {
    let (l, ml, lc, il, mh, j) = (p.leg_length, p.leg_mass, p.leg_com_dist, p.leg_inertia, p.hip_mass, p.disc_inertia);
    let cr = qr.cos();
    let d_rr = il + j / 4.0 + lc * lc * ml;
    let d_rn = il + j / 2.0 - lc * ml * (l * cr - lc);
    let d_nn = 2.0 * il + j + l * l * mh + ml * (l - lc).powi(2) + ml * (l * l - 2.0 * l * lc * cr + lc * lc);
    Matrix3::new(j, j / 2.0, j, j / 2.0, d_rr, d_rn, j, d_rn, d_nn)
}

/// Christoffel-form Coriolis matrix.
pub fn coriolis(p: &RobotParams, qr: f64, v: &GenVel) -> Matrix3<f64> {
    let k = p.leg_length * p.leg_com_dist * p.leg_mass * qr.sin();
    let mut c = Matrix3::zeros();
    c[(1, 2)] = -k * v.dqn;
    c[(2, 1)] = k * (v.dqn + v.dqr);
    c[(2, 2)] = k * v.dqr;
    c
}

/// Stance-leg lever arm of gravity excluding the swing leg COM offset.
fn stance_moment(p: &RobotParams) -> f64 {
    let (l, ml, lc, mh) = (p.leg_length, p.leg_mass, p.leg_com_dist, p.hip_mass);
    l * mh + ml * (l - lc) + ml * l
}

/// Gravity vector `∂P/∂q`.
pub fn gravity(p: &RobotParams, qr: f64, qn: f64) -> Vector3<f64> {
    let g = p.gravity;
    let mlc = p.leg_mass * p.leg_com_dist;
    let s = (qn + qr).sin();
    Vector3::new(0.0, g * mlc * s, -g * (stance_moment(p) * qn.sin() - mlc * s))
}

/// Partial derivatives `(∂G_N/∂q_r, ∂G_N/∂q_N)`.
pub fn gravity_n_partials(p: &RobotParams, qr: f64, qn: f64) -> (f64, f64) {
    let g = p.gravity;
    let mlc = p.leg_mass * p.leg_com_dist;
    let c = (qn + qr).cos();
    (g * mlc * c, -g * (stance_moment(p) * qn.cos() - mlc * c))
}

/// Input map for `u = (u_d, u_r)`.
pub fn input_map() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

pub fn dyn_terms(p: &RobotParams, q: &GenPos, v: &GenVel) -> DynTerms {
    DynTerms { d: mass_matrix(p, q.qr), c: coriolis(p, q.qr, v), g: gravity(p, q.qr, q.qn), b: input_map() }
}

/// Angular momentum about the stance foot, `σ_N = D_N q̇`.
pub fn momentum(p: &RobotParams, q: &GenPos, v: &GenVel) -> f64 {
    let d = mass_matrix(p, q.qr);
    (d.row(2) * v.to_vector())[0]
}

pub fn omega_from_vel(p: &RobotParams, q: &GenPos, v: &GenVel) -> Omega {
    Omega::new(momentum(p, q, v), v.dqr, v.dqn)
}

pub fn vel_from_omega(p: &RobotParams, q: &GenPos, w: &Omega) -> Result<GenVel> {
    let d = mass_matrix(p, q.qr);
    let d31 = d[(2, 0)];
    if d31.abs() < 1e-12 {
        return Err(Error::SingularMomentumMap(d31));
    }
    let dqd = (w.sigma - d[(2, 1)] * w.dqr - d[(2, 2)] * w.dqn) / d31;
    Ok(GenVel::new(dqd, w.dqr, w.dqn))
}

pub fn potential_energy(p: &RobotParams, q: &GenPos) -> f64 {
    let (l, ml, lc, mh) = (p.leg_length, p.leg_mass, p.leg_com_dist, p.hip_mass);
    let cn = q.qn.cos();
    p.gravity * ((l * mh + ml * (l - lc)) * cn + ml * (l * cn - lc * (q.qn + q.qr).cos()))
}

pub fn kinetic_energy(p: &RobotParams, q: &GenPos, v: &GenVel) -> f64 {
    let dq = v.to_vector();
    0.5 * dq.dot(&(mass_matrix(p, q.qr) * dq))
}

pub fn total_energy(p: &RobotParams, q: &GenPos, v: &GenVel) -> f64 {
    kinetic_energy(p, q, v) + potential_energy(p, q)
}

/// Generalized accelerations under input `u`.
pub fn accelerations(p: &RobotParams, q: &GenPos, v: &GenVel, u: [f64; 2]) -> Vector3<f64> {
    let t = dyn_terms(p, q, v);
    let rhs = t.b * nalgebra::Vector2::new(u[0], u[1]) - t.c * v.to_vector() - t.g;
    t.d.cholesky().expect("mass matrix is positive definite").solve(&rhs)
}
