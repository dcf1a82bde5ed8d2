//! Linearized step-to-step analysis around the nominal gait.
//!
//! Along the flow the transverse state `y = (h_r, ḣ_r, b, c)` obeys, to first
//! order, `dy/dq_N = Ξ(q_N) y`. Its transition matrix `Φ_y` has a closed form
//! built from `ζ = ∫V⁻¹` and `ψ = ∫S′²V⁻¹`. Composed with the linearized
//! impact `Δ̄_y` it gives the linear return map `P̄ = Φ_y(q_N⁻) Δ̄_y`.

use std::fmt::Write as _;

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::control::{bc_coords, Controller, Gains, YState};
use crate::dynamics::{omega_from_vel, vel_from_omega, GenPos, Omega, RobotParams, State};
use crate::error::{Error, Result};
use crate::gait::{f2, GaitSpec};
use crate::impact::apply_impact;
use crate::numerics::quad;
use crate::sim::Simulator;

/// Central-difference step for the impact Jacobian.
pub const IMPACT_FD_STEP: f64 = 1e-7;
/// Central-difference step for the numeric return-map Jacobian.
pub const POINCARE_FD_STEP: f64 = 1e-6;
/// Norm of the probe used to measure contraction in simulation.
pub const PROBE_NORM: f64 = 1e-3;
/// Returns measured after the probe.
pub const PROBE_STEPS: usize = 3;

/// `ρ` must clear 1 by this much: a unit eigenvalue is marginal, not stable.
pub const PASS_MARGIN: f64 = 1e-8;

const QUAD_TOL: f64 = 1e-10;
const MIN_ALPHA_GAP: f64 = 1e-9;

fn speed_or_nan(g: &GaitSpec, q: f64) -> f64 {
    g.speed(q).map(|v| v.0).unwrap_or(f64::NAN)
}

fn ds_or_nan(g: &GaitSpec, q: f64) -> f64 {
    g.momentum_profile(q).map(|s| s.1).unwrap_or(f64::NAN)
}

/// `∫_a^b S′²/V`.
fn psi_between(g: &GaitSpec, a: f64, b: f64) -> Result<f64> {
    quad::integrate(|t| ds_or_nan(g, t).powi(2) / speed_or_nan(g, t), a, b, QUAD_TOL, 1e-13)
}

/// `(ζ(q), ψ(q))`, both integrated from `q_N⁺`.
pub fn zeta_psi(g: &GaitSpec, q: f64) -> Result<(f64, f64)> {
    g.speed(q)?;
    let zeta = quad::integrate(|t| 1.0 / speed_or_nan(g, t), g.qn_plus, q, QUAD_TOL, 1e-13)?;
    Ok((zeta, psi_between(g, g.qn_plus, q)?))
}

/// `Ξ(q_N)`, the coefficient of the linearized transverse dynamics in `q_N`.
pub fn xi(p: &RobotParams, g: &GaitSpec, gains: &Gains, q: f64) -> Result<Matrix4<f64>> {
    let (v, _) = g.speed(q)?;
    let (_, ds, _) = g.momentum_profile(q)?;
    let k = gains.coupling();
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        -gains.kp, -gains.kv, 0.0, 0.0,
        f2(p, g, q)?, 0.0, -k * ds * ds, -ds,
        0.0, 0.0, 0.0, -gains.beta0,
    );
    Ok(m / v)
}

/// Transition matrix of `ḧ + K_V ḣ + K_P h = 0` over "time" `ζ`, as
/// `[g_pp, g_pv, g_vp, g_vv]`, plus the largest discarded imaginary part.
fn h_block(a1: Complex64, a2: Complex64, zeta: f64) -> ([f64; 4], f64) {
    let (e1, e2) = ((-a1 * zeta).exp(), (-a2 * zeta).exp());
    let d = a1 - a2;
    let z = [(a1 * e2 - a2 * e1) / d, (e2 - e1) / d, a1 * a2 * (e1 - e2) / d, (a1 * e1 - a2 * e2) / d];
    let residue = z.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    ([z[0].re, z[1].re, z[2].re, z[3].re], residue)
}

/// Entries of `Φ_y(q_N, q_N⁺)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEntries {
    pub g_pp: f64,
    pub g_pv: f64,
    pub g_vp: f64,
    pub g_vv: f64,
    pub g_bp: f64,
    pub g_bv: f64,
    pub g_bb: f64,
    pub g_bc: f64,
    pub g_cc: f64,
    pub alpha: (Complex64, Complex64),
    pub zeta: f64,
    pub psi: f64,
    /// Largest imaginary part dropped from the `(h_r, ḣ_r)` block.
    pub imag_residue: f64,
}

impl PhiEntries {
    pub fn matrix(&self) -> Matrix4<f64> {
        #[rustfmt::skip]
        let m = Matrix4::new(
            self.g_pp, self.g_pv, 0.0, 0.0,
            self.g_vp, self.g_vv, 0.0, 0.0,
            self.g_bp, self.g_bv, self.g_bb, self.g_bc,
            0.0, 0.0, 0.0, self.g_cc,
        );
        m
    }
}

pub fn phi_y(p: &RobotParams, g: &GaitSpec, gains: &Gains, q_end: f64) -> Result<PhiEntries> {
    gains.validate()?;
    let (a1, a2) = gains.alphas();
    let gap = (a1 - a2).norm();
    if gap < MIN_ALPHA_GAP {
        return Err(Error::DegenerateGains(gap));
    }
    let k = gains.coupling();
    let (zeta, psi) = zeta_psi(g, q_end)?;
    let ([g_pp, g_pv, g_vp, g_vv], imag_residue) = h_block(a1, a2, zeta);

    // E(τ)/V(τ) with E = exp(k(ψ(τ) − ψ(q))), plus ζ(τ); NaN on failure.
    let weight = |t: f64| -> (f64, f64) {
        let v = speed_or_nan(g, t);
        let zt = quad::integrate(|s| 1.0 / speed_or_nan(g, s), g.qn_plus, t, QUAD_TOL, 1e-13);
        let lag = if k == 0.0 { Ok(0.0) } else { psi_between(g, t, q_end) };
        match (zt, lag) {
            (Ok(zt), Ok(lag)) => ((-k * lag).exp() / v, zt),
            _ => (f64::NAN, f64::NAN),
        }
    };
    let f2_or_nan = |t: f64| f2(p, g, t).unwrap_or(f64::NAN);
    let integral = |f: &dyn Fn(f64) -> f64| quad::integrate(f, g.qn_plus, q_end, 1e-9, 1e-10);

    let g_bc = -integral(&|t| {
        let (w, zt) = weight(t);
        w * ds_or_nan(g, t) * (-gains.beta0 * zt).exp()
    })?;
    let kernel = |col: usize| {
        integral(&|t| {
            let (w, zt) = weight(t);
            let (h, _) = h_block(a1, a2, zt);
            w * f2_or_nan(t) * h[col]
        })
    };
    let g_bp = kernel(0)?;
    let g_bv = kernel(1)?;
    Ok(PhiEntries {
        g_pp,
        g_pv,
        g_vp,
        g_vv,
        g_bp,
        g_bv,
        g_bb: (-k * psi).exp(),
        g_bc,
        g_cc: (-gains.beta0 * zeta).exp(),
        alpha: (a1, a2),
        zeta,
        psi,
        imag_residue,
    })
}

/// Pre-impact state on the guard whose transverse coordinates are `y` (`q_d = 0`).
pub fn pre_impact_state(g: &GaitSpec, gains: &Gains, y: &YState) -> Result<State> {
    // Straight legs on flat ground strike when q_r = −2 q_N.
    let mut q = g.qn_minus;
    let mut res = f64::INFINITY;
    for _ in 0..50 {
        let (h, dh, _) = g.href(q)?;
        res = y.hr + h + 2.0 * q;
        if res.abs() < 1e-15 {
            break;
        }
        q -= res / (dh + 2.0);
    }
    if !(res.abs() < 1e-13) {
        return Err(Error::NotOnGuard { p2: res, p2_dot: f64::NAN });
    }
    let (h, dh, _) = g.href(q)?;
    let (v, _) = g.speed(q)?;
    let (s, ds, _) = g.momentum_profile(q)?;
    let dqn = y.c + v + gains.coupling() * ds * y.b;
    Ok(State { q: GenPos::new(0.0, y.hr + h, q), w: Omega::new(y.b + s, y.dhr + dh * dqn, dqn) })
}

/// `y⁻ ↦ y⁺` across one impact on the model `p`.
pub fn impact_y(p: &RobotParams, g: &GaitSpec, gains: &Gains, y: &YState) -> Result<YState> {
    let x = pre_impact_state(g, gains, y)?;
    bc_coords(g, gains, &apply_impact(p, &x)?.post_state)
}

fn central_jacobian(mut f: impl FnMut(&YState) -> Result<YState>, step: f64) -> Result<Matrix4<f64>> {
    let mut m = Matrix4::zeros();
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = step;
        let plus = f(&YState::from_array(e))?.to_array();
        e[j] = -step;
        let minus = f(&YState::from_array(e))?.to_array();
        for i in 0..4 {
            m[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(m)
}

/// `Δ̄_y`: Jacobian of [`impact_y`] at the fixed point.
pub fn linearized_impact(p: &RobotParams, g: &GaitSpec, gains: &Gains) -> Result<Matrix4<f64>> {
    central_jacobian(|y| impact_y(p, g, gains, y), IMPACT_FD_STEP)
}

/// Nonlinear return map: impact at `y₀`, then flow on `plant` to the next strike.
pub fn poincare_numeric(plant: &RobotParams, ctrl: &Controller, y0: &YState) -> Result<YState> {
    let model = &ctrl.params;
    let x = pre_impact_state(&ctrl.gait, &ctrl.gains, y0)?;
    let v = vel_from_omega(model, &x.q, &x.w)?;
    let post = apply_impact(plant, &State { q: x.q, w: omega_from_vel(plant, &x.q, &v) })?.post_state;
    let sim = Simulator::new(*plant, ctrl);
    let out = sim
        .flow_step(&post, 0.0, sim.max_step_duration, 0, &mut Vec::new())
        .map_err(|e| Error::NoReturn(e.to_string()))?;
    if !out.hit_guard {
        return Err(Error::NoReturn(format!("no strike within {} s", sim.max_step_duration)));
    }
    let v = vel_from_omega(plant, &out.state.q, &out.state.w)?;
    ctrl.y_of(&State { q: out.state.q, w: omega_from_vel(model, &out.state.q, &v) })
}

pub fn fd_poincare_jacobian(plant: &RobotParams, ctrl: &Controller, step: f64) -> Result<Matrix4<f64>> {
    central_jacobian(|y| poincare_numeric(plant, ctrl, y), step)
}

/// `‖y_{k+1}‖/‖y_k‖` for `steps` iterations of the return map from `y0`.
pub fn contraction_ratios(plant: &RobotParams, ctrl: &Controller, y0: &YState, steps: usize) -> Result<Vec<f64>> {
    let mut y = *y0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = poincare_numeric(plant, ctrl, &y)?;
        out.push(next.norm() / y.norm());
        y = next;
    }
    Ok(out)
}

/// Probe direction used for measured contraction: equal weight on every coordinate.
pub fn probe() -> YState {
    YState::from_array([0.5 * PROBE_NORM; 4])
}

pub fn spectral_radius(m: &Matrix4<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub gains: Gains,
    pub phi: PhiEntries,
    pub delta_bar: Matrix4<f64>,
    pub p_bar: Matrix4<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    pub pass: bool,
    /// Spectral radius of the finite-difference return-map Jacobian.
    pub fd_spectral_radius: f64,
    /// `|ρ_fd − ρ| / ρ`.
    pub jacobian_error: f64,
    pub contraction_ratios: Vec<f64>,
}

pub fn stability_report(p: &RobotParams, g: &GaitSpec, gains: &Gains) -> Result<StabilityReport> {
    let phi = phi_y(p, g, gains, g.qn_minus)?;
    let delta_bar = linearized_impact(p, g, gains)?;
    let p_bar = phi.matrix() * delta_bar;
    let mut eigenvalues: Vec<Complex64> = p_bar.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let rho = eigenvalues[0].norm();
    let ctrl = Controller::new(*p, g.clone(), *gains);
    let fd_rho = spectral_radius(&fd_poincare_jacobian(p, &ctrl, POINCARE_FD_STEP)?);
    Ok(StabilityReport {
        gains: *gains,
        phi,
        delta_bar,
        p_bar,
        eigenvalues,
        spectral_radius: rho,
        pass: rho < 1.0 - PASS_MARGIN,
        fd_spectral_radius: fd_rho,
        jacobian_error: (fd_rho - rho).abs() / rho,
        contraction_ratios: contraction_ratios(p, &ctrl, &probe(), PROBE_STEPS)?,
    })
}

impl StabilityReport {
    /// Last measured ratio, i.e. the contraction once the probe transient has passed.
    pub fn measured_contraction(&self) -> f64 {
        self.contraction_ratios.last().copied().unwrap_or(f64::NAN)
    }
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix4<f64>) {
    let _ = writeln!(out, "{name}:");
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:>14.6e}")).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
}

impl StabilityReport {
    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.gains;
        let _ = writeln!(s, "gains: K_P={} K_V={} beta0={} gamma={}", g.kp, g.kv, g.beta0, g.gamma);
        let (a1, a2) = self.phi.alpha;
        let _ =
            writeln!(s, "alpha1={a1:.6} alpha2={a2:.6} zeta(q-)={:.6e} psi(q-)={:.6e}", self.phi.zeta, self.phi.psi);
        write_matrix(&mut s, "Phi_y(q-, q+)", &self.phi.matrix());
        write_matrix(&mut s, "Delta_y", &self.delta_bar);
        write_matrix(&mut s, "P", &self.p_bar);
        let _ = writeln!(s, "eigenvalues:");
        for z in &self.eigenvalues {
            let _ = writeln!(s, "  {:+.6e} {:+.6e}i  |{:.6e}|", z.re, z.im, z.norm());
        }
        let _ = writeln!(
            s,
            "spectral radius: {:.6e} ({})",
            self.spectral_radius,
            if self.pass { "stable" } else { "NOT stable" }
        );
        let _ = writeln!(
            s,
            "finite-difference spectral radius: {:.6e} (relative gap {:.3e})",
            self.fd_spectral_radius, self.jacobian_error
        );
        let ratios: Vec<String> = self.contraction_ratios.iter().map(|r| format!("{r:.4e}")).collect();
        let _ = writeln!(s, "measured contraction ratios: {}", ratios.join(" "));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{design_gait, GaitRequest};
    use crate::impact::delta_p;
    use std::sync::OnceLock;

    fn gait() -> &'static GaitSpec {
        static G: OnceLock<GaitSpec> = OnceLock::new();
        G.get_or_init(|| design_gait(&RobotParams::default(), &GaitRequest::default()).unwrap())
    }

    /// Classical RK4 on `dY/dq = Ξ Y`, `Y(q⁺) = I`.
    fn rk4_transition(p: &RobotParams, g: &GaitSpec, gains: &Gains, q_end: f64, n: usize) -> Matrix4<f64> {
        let h = (q_end - g.qn_plus) / n as f64;
        let f = |q: f64, y: &Matrix4<f64>| xi(p, g, gains, q).unwrap() * y;
        let mut y = Matrix4::identity();
        for i in 0..n {
            let q = g.qn_plus + i as f64 * h;
            let k1 = f(q, &y);
            let k2 = f(q + h / 2.0, &(y + k1 * (h / 2.0)));
            let k3 = f(q + h / 2.0, &(y + k2 * (h / 2.0)));
            let k4 = f(q + h, &(y + k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    #[test]
    fn zeta_psi_vanish_at_start_and_grow() {
        let g = gait();
        assert_eq!(zeta_psi(g, g.qn_plus).unwrap(), (0.0, 0.0));
        let mut last = (0.0, 0.0);
        for i in 1..=8 {
            let q = g.qn_plus + i as f64 / 8.0 * g.step_length();
            let z = zeta_psi(g, q).unwrap();
            assert!(z.0 > last.0 && z.1 >= last.1);
            last = z;
        }
    }

    #[test]
    fn phi_is_identity_at_start() {
        let p = RobotParams::default();
        let m = phi_y(&p, gait(), &Gains::default(), gait().qn_plus).unwrap().matrix();
        assert_eq!(m, Matrix4::identity());
    }

    #[test]
    fn phi_matches_ode_oracle() {
        let p = RobotParams::default();
        let g = gait();
        for gains in [Gains::default(), Gains { kp: 96.0, kv: 20.0, ..Gains::default() }] {
            for frac in [0.5, 1.0] {
                let q = g.qn_plus + frac * g.step_length();
                let phi = phi_y(&p, g, &gains, q).unwrap();
                assert!(phi.imag_residue < 1e-10);
                let err = (phi.matrix() - rk4_transition(&p, g, &gains, q, 20_000)).abs().max();
                assert!(err < 1e-6, "{gains:?} at {frac}: {err:e}");
            }
        }
    }

    #[test]
    fn phi_without_coupling() {
        let p = RobotParams::default();
        let g = gait();
        let gains = Gains { gamma: 0.0, ..Gains::default() };
        let phi = phi_y(&p, g, &gains, g.qn_minus).unwrap();
        assert_eq!(phi.g_bb, 1.0);
        let err = (phi.matrix() - rk4_transition(&p, g, &gains, g.qn_minus, 20_000)).abs().max();
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn degenerate_gains_rejected() {
        let gains = Gains { kp: 100.0, kv: 20.0, ..Gains::default() };
        let r = phi_y(&RobotParams::default(), gait(), &gains, gait().qn_minus);
        assert!(matches!(r, Err(Error::DegenerateGains(_))));
    }

    #[test]
    fn g_bb_decreases_with_coupling() {
        let p = RobotParams::default();
        let g = gait();
        let q = g.qn_plus + 0.5 * g.step_length();
        let vals: Vec<f64> = [0.1, 0.35, 1.0]
            .iter()
            .map(|&gamma| phi_y(&p, g, &Gains { gamma, ..Gains::default() }, q).unwrap().g_bb)
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    #[test]
    fn impact_map_fixes_origin() {
        let p = RobotParams::default();
        let y = impact_y(&p, gait(), &Gains::default(), &YState::default()).unwrap();
        assert!(y.norm() < 1e-8, "{y:?}");
    }

    #[test]
    fn linearized_impact_matches_velocity_block() {
        let p = RobotParams::default();
        let g = gait();
        let gains = Gains::default();
        let d = linearized_impact(&p, g, &gains).unwrap();
        let dp = delta_p(&p, g, &gains, 0.0, g.qn_minus, g.qn_plus).unwrap();
        // delta_p orders (b, ḣ_r, c); y orders (h_r, ḣ_r, b, c).
        let idx = [2, 1, 3];
        for i in 0..3 {
            for j in 0..3 {
                let e = (d[(idx[i], idx[j])] - dp[(i, j)]).abs();
                assert!(e < 1e-5, "({i},{j}): {e:e}");
            }
        }
    }

    #[test]
    fn uncoupled_b_mode_is_not_attenuated() {
        let p = RobotParams::default();
        let g = gait();
        let gains = Gains { gamma: 0.0, ..Gains::default() };
        let d = linearized_impact(&p, g, &gains).unwrap();
        let pb = phi_y(&p, g, &gains, g.qn_minus).unwrap().matrix() * d;
        let ev = pb.complex_eigenvalues();
        assert!(ev.iter().any(|z| (z.norm() - d[(2, 2)].abs()).abs() < 1e-6), "{ev:?} vs {}", d[(2, 2)]);
    }

    #[test]
    fn impact_entries_grow_at_most_quadratically() {
        let p = RobotParams::default();
        let g = gait();
        let base = linearized_impact(&p, g, &Gains { gamma: 0.0, ..Gains::default() }).unwrap();
        let ks: Vec<f64> = vec![0.5, 1.0, 2.0, 4.0, 8.0];
        let growth: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let gains = Gains { gamma: k * Gains::default().beta0, ..Gains::default() };
                (linearized_impact(&p, g, &gains).unwrap() - base).abs().max()
            })
            .collect();
        let (lx, ly): (Vec<f64>, Vec<f64>) = ks.iter().zip(&growth).map(|(k, g)| (k.ln(), g.ln())).unzip();
        let (mx, my) = (lx.iter().sum::<f64>() / 5.0, ly.iter().sum::<f64>() / 5.0);
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!(slope <= 2.1, "fitted exponent {slope}");
    }
}
