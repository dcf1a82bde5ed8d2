//! Nominal step synthesis.
//!
//! The step runs over `q_N ∈ [q_N⁺, q_N⁻]`. The inter-leg angle follows a
//! degree-4 Bezier reference `h_r^ref(q_N)`, the absolute speed follows
//! `V(q_N) = θ·v̂(ŝ)`, and the momentum profile `S(q_N)` integrates
//! `k₂(0, ·)/V`. Boundary values and slopes are fixed by impact invariance;
//! `θ` is found so that the momentum lost at impact is restored by gravity.

use std::ops::Deref;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{gravity, gravity_n_partials, mass_matrix, GenPos, RobotParams};
use crate::error::{Error, Result};
use crate::impact::{delta_omega, relabel, swing_foot_height};
use crate::numerics::bezier::Bezier;
use crate::numerics::quad;
use crate::numerics::roots::bisect_secant;
use crate::numerics::spline::HermiteTable;

/// Default extension of the gait domain beyond each step boundary, as a
/// fraction of the step length.
pub const DEFAULT_MARGIN: f64 = 0.2;

/// Step used for the first-order coefficient of `k₂` in `h_r`.
pub const F2_STEP: f64 = 1e-6;

/// `V(q_N) = θ (1 + a₁ŝ + a₂ŝ² + a₃ŝ³)` with `ŝ ∈ [−1, 1]` across the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub theta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl SpeedProfile {
    /// Shape with `a₁` fixed by the impact speed ratio `λ = V(q_N⁺)/V(q_N⁻)`.
    pub fn with_speed_ratio(theta: f64, a2: f64, a3: f64, ratio: f64) -> Self {
        let a1 = (1.0 + a2) * (1.0 - ratio) / (1.0 + ratio) - a3;
        Self { theta, a1, a2, a3 }
    }

    /// `(v̂, dv̂/dŝ)`.
    pub fn shape(&self, sh: f64) -> (f64, f64) {
        (1.0 + sh * (self.a1 + sh * (self.a2 + sh * self.a3)), self.a1 + sh * (2.0 * self.a2 + 3.0 * sh * self.a3))
    }
}

/// Geometry, reference and speed of a step (everything except the momentum table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitShape {
    pub qn_plus: f64,
    pub qn_minus: f64,
    pub q_bar_plus: GenPos,
    pub q_bar_minus: GenPos,
    pub href_coeffs: Vec<f64>,
    pub speed: SpeedProfile,
    pub margin: f64,
}

impl GaitShape {
    pub fn step_length(&self) -> f64 {
        self.qn_minus - self.qn_plus
    }

    pub fn domain(&self) -> (f64, f64) {
        let m = self.margin * self.step_length();
        (self.qn_plus - m, self.qn_minus + m)
    }

    fn check(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        // Tolerate rounding at the ends of the extended domain.
        let tol = 1e-12 * self.step_length();
        if !(q >= lo - tol && q <= hi + tol) {
            return Err(Error::OutOfRange { q, lo, hi });
        }
        Ok((q - self.qn_plus) / self.step_length())
    }

    /// `(h_r^ref, ∂h_r^ref/∂q_N, ∂²h_r^ref/∂q_N²)`.
    pub fn href(&self, q: f64) -> Result<(f64, f64, f64)> {
        let s = self.check(q)?;
        let w = self.step_length();
        let (h, d, dd) = Bezier::new(self.href_coeffs.clone()).eval(s);
        Ok((h, d / w, dd / (w * w)))
    }

    /// `(V, ∂V/∂q_N)`.
    pub fn speed(&self, q: f64) -> Result<(f64, f64)> {
        let s = self.check(q)?;
        let (v, dv) = self.speed.shape(2.0 * s - 1.0);
        Ok((self.speed.theta * v, self.speed.theta * dv * 2.0 / self.step_length()))
    }
}

/// Complete nominal gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    #[serde(flatten)]
    pub shape: GaitShape,
    pub delta_sigma: f64,
    pub sigma_n_plus: f64,
    pub s_table: HermiteTable,
}

impl Deref for GaitSpec {
    type Target = GaitShape;
    fn deref(&self) -> &GaitShape {
        &self.shape
    }
}

impl GaitSpec {
    /// `(S, ∂S/∂q_N, ∂²S/∂q_N²)` from the table.
    pub fn momentum_profile(&self, q: f64) -> Result<(f64, f64, f64)> {
        self.check(q)?;
        Ok(self.s_table.eval(q.clamp(self.s_table.lo(), self.s_table.hi())))
    }

    /// `|S(q_N⁻) − S(q_N⁺) − Δ_σ|`.
    pub fn periodicity_residual(&self) -> Result<f64> {
        let (sm, _, _) = self.momentum_profile(self.qn_minus)?;
        let (sp, _, _) = self.momentum_profile(self.qn_plus)?;
        Ok((sm - sp - self.delta_sigma).abs())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::GaitFile(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::GaitFile(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::GaitFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::GaitFile(e.to_string()))?;
        Self::from_toml_str(&s)
    }
}

pub fn href_eval(g: &GaitShape, qn: f64) -> Result<(f64, f64, f64)> {
    g.href(qn)
}

/// Impact-invariance data for a step ending at `q̄⁻` with a chosen
/// pre-impact reference slope.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub q_bar_plus: GenPos,
    pub slope_plus: f64,
    pub slope_minus: f64,
    /// `V(q_N⁺) / V(q_N⁻)`.
    pub speed_ratio: f64,
    /// `Δ_σ / V(q_N⁻)`; the momentum jump is linear in the impact speed.
    pub delta_sigma_per_speed: f64,
    pub delta_omega: Matrix3<f64>,
}

pub fn solve_boundary_constraints(
    p: &RobotParams,
    qn_plus: f64,
    qn_minus: f64,
    q_bar_minus: &GenPos,
    slope_minus: f64,
) -> Result<BoundaryData> {
    if q_bar_minus.qr.abs() < 1e-9 {
        return Err(Error::InfeasibleBoundary("zero step length (q_r⁻ = 0)".into()));
    }
    if (q_bar_minus.qn - qn_minus).abs() > 1e-12 {
        return Err(Error::InfeasibleBoundary("q̄⁻ disagrees with q_N⁻".into()));
    }
    let p2 = swing_foot_height(p, q_bar_minus);
    if p2.abs() > 1e-9 {
        return Err(Error::InfeasibleBoundary(format!("q̄⁻ is off the impact surface (p₂ = {p2:e})")));
    }
    let q_bar_plus = relabel(q_bar_minus);
    if (q_bar_plus.qn - qn_plus).abs() > 1e-9 || qn_plus >= qn_minus {
        return Err(Error::InfeasibleBoundary("q_N⁺ inconsistent with leg exchange".into()));
    }
    let w = delta_omega(p, q_bar_minus.qr, qn_minus)?;
    let ratio = w[(2, 1)] * slope_minus + w[(2, 2)];
    if ratio.abs() < 1e-9 {
        return Err(Error::InfeasibleBoundary("impact stops the stance leg".into()));
    }
    if ratio < 0.0 {
        return Err(Error::InfeasibleBoundary("impact reverses the stance leg".into()));
    }
    let slope_plus = (w[(1, 1)] * slope_minus + w[(1, 2)]) / ratio;
    Ok(BoundaryData {
        q_bar_plus,
        slope_plus,
        slope_minus,
        speed_ratio: ratio,
        delta_sigma_per_speed: -(w[(0, 1)] * slope_minus + w[(0, 2)]),
        delta_omega: w,
    })
}

/// `k₂(h_r, q_N) = −G_N(h_r + h_r^ref(q_N), q_N)`.
pub fn k2(p: &RobotParams, g: &GaitShape, hr: f64, qn: f64) -> Result<f64> {
    let (h, _, _) = g.href(qn)?;
    Ok(-gravity(p, hr + h, qn)[2])
}

/// `∂k₂(0, q_N)/∂q_N`.
fn k2_slope(p: &RobotParams, g: &GaitShape, qn: f64) -> Result<f64> {
    let (h, dh, _) = g.href(qn)?;
    let (gr, gn) = gravity_n_partials(p, h, qn);
    Ok(-(gr * dh + gn))
}

/// First-order coefficient of `k₂` in `h_r` at `h_r = 0`.
pub fn f2(p: &RobotParams, g: &GaitShape, qn: f64) -> Result<f64> {
    Ok((k2(p, g, F2_STEP, qn)? - k2(p, g, -F2_STEP, qn)?) / (2.0 * F2_STEP))
}

/// `(S′, S″)` in closed form.
fn s_derivatives(p: &RobotParams, g: &GaitShape, qn: f64) -> Result<(f64, f64)> {
    let k = k2(p, g, 0.0, qn)?;
    let dk = k2_slope(p, g, qn)?;
    let (v, dv) = g.speed(qn)?;
    Ok((k / v, (dk * v - k * dv) / (v * v)))
}

/// Number of table intervals between `q_N⁺` and `q_N⁻` for a requested node count.
fn inner_intervals(nodes: usize, margin: f64) -> usize {
    ((nodes.max(201) - 1) as f64 / (1.0 + 2.0 * margin)).round().max(10.0) as usize
}

/// Tabulate `S(q_N) = σ_N⁺ + ∫_{q_N⁺}^{q_N} k₂(0,τ)/V(τ) dτ` on a uniform grid that
/// contains both step boundaries and extends over the margin.
pub fn build_s(p: &RobotParams, g: &GaitShape, sigma_plus: f64, nodes: usize) -> Result<HermiteTable> {
    let (lo, hi) = g.domain();
    let vmin = (0..=2000)
        .map(|i| g.speed(lo + (hi - lo) * i as f64 / 2000.0).map(|v| v.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if vmin <= 0.0 {
        return Err(Error::NoPeriodicGait(format!("speed profile not positive (min {vmin:.4})")));
    }
    let n_in = inner_intervals(nodes, g.margin);
    let n_m = (g.margin * n_in as f64).round() as usize;
    let dx = g.step_length() / n_in as f64;
    let n = n_in + 2 * n_m;
    let i_plus = n_m;
    let x: Vec<f64> = (0..=n).map(|i| g.qn_plus + (i as f64 - i_plus as f64) * dx).map(|x| x.clamp(lo, hi)).collect();
    let mut x = x;
    x[i_plus] = g.qn_plus;
    x[i_plus + n_in] = g.qn_minus;

    let integrand = |t: f64| {
        let k = k2(p, g, 0.0, t).unwrap_or(f64::NAN);
        let v = g.speed(t).map(|v| v.0).unwrap_or(f64::NAN);
        k / v
    };
    let tol = 1e-10 / n as f64;
    let mut y = vec![0.0; n + 1];
    y[i_plus] = sigma_plus;
    for i in i_plus..n {
        y[i + 1] = y[i] + quad::integrate(integrand, x[i], x[i + 1], tol, 0.0)?;
    }
    for i in (0..i_plus).rev() {
        y[i] = y[i + 1] - quad::integrate(integrand, x[i], x[i + 1], tol, 0.0)?;
    }
    let mut dy = Vec::with_capacity(n + 1);
    let mut ddy = Vec::with_capacity(n + 1);
    for &xi in &x {
        let (d1, d2) = s_derivatives(p, g, xi)?;
        dy.push(d1);
        ddy.push(d2);
    }
    Ok(HermiteTable::new(x, y, dy, ddy))
}

/// What the user asks for; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitRequest {
    /// Stance-leg angle at impact.
    pub qn_minus: f64,
    /// Inter-leg angle at impact.
    pub qr_minus: f64,
    /// `∂h_r^ref/∂q_N` just before impact.
    pub slope_minus: f64,
    /// Middle Bezier coefficient; `None` makes the legs cross at mid-step.
    pub bezier_free: Option<f64>,
    pub v_a2: f64,
    pub v_a3: f64,
    pub s_nodes: usize,
    pub margin: f64,
}

impl Default for GaitRequest {
    fn default() -> Self {
        Self {
            qn_minus: 15f64.to_radians(),
            qr_minus: -30f64.to_radians(),
            slope_minus: -1.0,
            bezier_free: None,
            v_a2: 0.3,
            v_a3: 0.7,
            s_nodes: 421,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// Bracket searched for the speed scale `θ` (rad/s).
const THETA_RANGE: (f64, f64) = (1e-3, 1e2);

pub fn design_gait(p: &RobotParams, req: &GaitRequest) -> Result<GaitSpec> {
    p.validate()?;
    let q_bar_minus = GenPos::new(0.0, req.qr_minus, req.qn_minus);
    let qn_plus = req.qn_minus + req.qr_minus;
    let bd = solve_boundary_constraints(p, qn_plus, req.qn_minus, &q_bar_minus, req.slope_minus)?;
    let w = req.qn_minus - qn_plus;
    let (c0, c4) = (bd.q_bar_plus.qr, q_bar_minus.qr);
    let c1 = c0 + bd.slope_plus * w / 4.0;
    let c3 = c4 - bd.slope_minus * w / 4.0;
    let c2 = req.bezier_free.unwrap_or(-(c0 + 4.0 * c1 + 4.0 * c3 + c4) / 6.0);

    let mut shape = GaitShape {
        qn_plus,
        qn_minus: req.qn_minus,
        q_bar_plus: bd.q_bar_plus,
        q_bar_minus,
        href_coeffs: vec![c0, c1, c2, c3, c4],
        speed: SpeedProfile::with_speed_ratio(1.0, req.v_a2, req.v_a3, bd.speed_ratio),
        margin: req.margin,
    };

    let residual = |theta: f64| -> f64 {
        let mut s = shape.clone();
        s.speed.theta = theta;
        let gain = quad::integrate(
            |t| k2(p, &s, 0.0, t).unwrap_or(f64::NAN) / s.speed(t).map(|v| v.0).unwrap_or(f64::NAN),
            s.qn_plus,
            s.qn_minus,
            1e-13,
            0.0,
        )
        .unwrap_or(f64::NAN);
        // Δσ from the impact map applied to the on-gait pre-impact state.
        let v_minus = s.speed(s.qn_minus).map(|v| v.0).unwrap_or(f64::NAN);
        let wm = nalgebra::Vector3::new(0.0, bd.slope_minus * v_minus, v_minus);
        let wp = bd.delta_omega * wm;
        gain - (wm[0] - wp[0])
    };

    let grid: Vec<f64> =
        (0..=60).map(|i| THETA_RANGE.0 * (THETA_RANGE.1 / THETA_RANGE.0).powf(i as f64 / 60.0)).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| residual(t)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure(f64::NAN));
    }
    let k = (0..grid.len() - 1).find(|&i| vals[i].signum() != vals[i + 1].signum()).ok_or_else(|| {
        Error::NoPeriodicGait(format!("momentum residual keeps sign over θ ∈ [{}, {}]", THETA_RANGE.0, THETA_RANGE.1))
    })?;
    let theta = bisect_secant(residual, grid[k], grid[k + 1], 1e-12)
        .ok_or_else(|| Error::NoPeriodicGait("root bracket lost".into()))?;
    shape.speed.theta = theta;

    let (v_plus, _) = shape.speed(qn_plus)?;
    let d_plus = mass_matrix(p, bd.q_bar_plus.qr);
    // Disc at rest relative to the legs at the start of the step.
    let sigma_plus = d_plus[(2, 1)] * bd.slope_plus * v_plus + d_plus[(2, 2)] * v_plus;
    let (v_minus, _) = shape.speed(req.qn_minus)?;
    let delta_sigma = bd.delta_sigma_per_speed * v_minus;
    let s_table = build_s(p, &shape, sigma_plus, req.s_nodes)?;
    let gait = GaitSpec { shape, delta_sigma, sigma_n_plus: sigma_plus, s_table };
    let r = gait.periodicity_residual()?;
    if !(r < 1e-9) {
        return Err(Error::NoPeriodicGait(format!("residual {r:e} after root-find")));
    }
    Ok(gait)
}
