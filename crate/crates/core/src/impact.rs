//! Swing-foot guard and rigid plastic impact with leg exchange.

use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::control::Gains;
use crate::dynamics::{omega_from_vel, vel_from_omega, GenPos, GenVel, RobotParams, State};
use crate::error::{Error, Result};
use crate::gait::GaitSpec;

/// Band around the guard surface accepted as contact.
pub const GUARD_EPS: f64 = 1e-10;

/// Vertical position of the swing foot, `p₂(q)`.
pub fn swing_foot_height(p: &RobotParams, q: &GenPos) -> f64 {
    p.leg_length * (q.qn.cos() - (q.qn + q.qr).cos())
}

/// Time derivative of `p₂`.
pub fn swing_foot_height_rate(p: &RobotParams, q: &GenPos, v: &GenVel) -> f64 {
    let l = p.leg_length;
    -l * q.qn.sin() * v.dqn + l * (q.qn + q.qr).sin() * (v.dqn + v.dqr)
}

/// Leg relabeling; involutive.
pub fn delta_q() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 1.0)
}

pub fn relabel(q: &GenPos) -> GenPos {
    GenPos::from_vector(&(delta_q() * q.to_vector()))
}

/// Unconstrained mass matrix in `(q_d, q_r, q_N, x_hip, y_hip)`.
fn extended_mass_matrix(p: &RobotParams, qr: f64, qn: f64) -> SMatrix<f64, 5, 5> {
    let (ml, lc, il) = (p.leg_mass, p.leg_com_dist, p.leg_inertia);
    let mut m = SMatrix::<f64, 5, 5>::zeros();
    m[(3, 3)] += p.hip_mass;
    m[(4, 4)] += p.hip_mass;
    let disc = SVector::<f64, 5>::from([1.0, 0.5, 1.0, 0.0, 0.0]);
    m += p.disc_inertia * disc * disc.transpose();
    let legs = [
        (qn, SVector::<f64, 5>::from([0.0, 0.0, 1.0, 0.0, 0.0])),
        (qn + qr, SVector::<f64, 5>::from([0.0, 1.0, 1.0, 0.0, 0.0])),
    ];
    for (th, w) in legs {
        // Leg COM = hip − l_c·(−sin θ, cos θ).
        let jx = SVector::<f64, 5>::from([0.0, 0.0, 0.0, 1.0, 0.0]) + lc * th.cos() * w;
        let jy = SVector::<f64, 5>::from([0.0, 0.0, 0.0, 0.0, 1.0]) + lc * th.sin() * w;
        m += ml * (jx * jx.transpose() + jy * jy.transpose()) + il * w * w.transpose();
    }
    m
}

/// Post-impact generalized velocity (already relabeled) and the impulse
/// at the new stance foot.
pub fn impact_velocity(p: &RobotParams, q: &GenPos, v: &GenVel) -> Result<(GenVel, Vector2<f64>)> {
    if q.qr.abs() < 1e-9 {
        return Err(Error::SingularImpact);
    }
    let l = p.leg_length;
    let (qr, qn) = (q.qr, q.qn);
    let th = qn + qr;
    let ve = SVector::<f64, 5>::from([v.dqd, v.dqr, v.dqn, -l * qn.cos() * v.dqn, -l * qn.sin() * v.dqn]);
    let jc =
        SMatrix::<f64, 2, 5>::new(0.0, l * th.cos(), l * th.cos(), 1.0, 0.0, 0.0, l * th.sin(), l * th.sin(), 0.0, 1.0);
    let de = extended_mass_matrix(p, qr, qn);
    let mut a = SMatrix::<f64, 7, 7>::zeros();
    a.fixed_view_mut::<5, 5>(0, 0).copy_from(&de);
    a.fixed_view_mut::<5, 2>(0, 5).copy_from(&(-jc.transpose()));
    a.fixed_view_mut::<2, 5>(5, 0).copy_from(&jc);
    let mut rhs = SVector::<f64, 7>::zeros();
    rhs.fixed_rows_mut::<5>(0).copy_from(&(de * ve));
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularImpact)?;
    let dq_plus = Vector3::new(sol[0], sol[1], sol[2]);
    let impulse = Vector2::new(sol[5], sol[6]);
    Ok((GenVel::from_vector(&(delta_q() * dq_plus)), impulse))
}

/// `ω⁺ = Δ_ω ω⁻` at a pre-impact configuration.
pub fn delta_omega(p: &RobotParams, qr_minus: f64, qn_minus: f64) -> Result<Matrix3<f64>> {
    let q = GenPos::new(0.0, qr_minus, qn_minus);
    let q_plus = relabel(&q);
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut w = Vector3::zeros();
        w[k] = 1.0;
        let v = vel_from_omega(p, &q, &crate::dynamics::Omega::from_vector(&w))?;
        let (vp, _) = impact_velocity(p, &q, &v)?;
        m.set_column(k, &omega_from_vel(p, &q_plus, &vp).to_vector());
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactResult {
    pub post_state: State,
    /// Ground impulse at the new stance foot (N·s).
    pub impulse: Vector2<f64>,
    /// `|F_x / F_y|`, the friction coefficient needed to avoid slipping.
    pub slip_check: f64,
}

pub fn apply_impact(p: &RobotParams, x: &State) -> Result<ImpactResult> {
    let v = vel_from_omega(p, &x.q, &x.w)?;
    let p2 = swing_foot_height(p, &x.q);
    let p2_dot = swing_foot_height_rate(p, &x.q, &v);
    if p2.abs() >= GUARD_EPS || p2_dot >= 0.0 {
        return Err(Error::NotOnGuard { p2, p2_dot });
    }
    let (vp, impulse) = impact_velocity(p, &x.q, &v)?;
    let qp = relabel(&x.q);
    let rate = swing_foot_height_rate(p, &qp, &vp);
    if rate <= 0.0 {
        return Err(Error::PenetrationImpact(rate));
    }
    Ok(ImpactResult {
        post_state: State { q: qp, w: omega_from_vel(p, &qp, &vp) },
        impulse,
        slip_check: (impulse[0] / impulse[1]).abs(),
    })
}

/// Velocity-part impact map in `(b, ḣ_r, c)` coordinates at fixed
/// configurations: `Δ₁(q_N⁺) Δ_ω Δ₂(q_N⁻)`.
pub fn delta_p(
    p: &RobotParams,
    gait: &GaitSpec,
    gains: &Gains,
    hr_minus: f64,
    qn_minus: f64,
    qn_plus: f64,
) -> Result<Matrix3<f64>> {
    let k = gains.gamma / gains.beta0;
    let (href_m, slope_m, _) = gait.href(qn_minus)?;
    let (_, slope_p, _) = gait.href(qn_plus)?;
    let (_, ds_m, _) = gait.momentum_profile(qn_minus)?;
    let (_, ds_p, _) = gait.momentum_profile(qn_plus)?;
    let w = delta_omega(p, hr_minus + href_m, qn_minus)?;
    let d2 = Matrix3::new(1.0, 0.0, 0.0, k * slope_m * ds_m, 1.0, slope_m, k * ds_m, 0.0, 1.0);
    let d1 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, -slope_p, -k * ds_p, 0.0, 1.0);
    Ok(d1 * w * d2)
}
