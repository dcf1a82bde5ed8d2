//! Event-driven closed-loop walking simulation.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::control::{ControlOutput, Controller, YState};
use crate::dynamics::{accelerations, omega_from_vel, vel_from_omega, GenPos, GenVel, RobotParams, State};
use crate::error::{Error, Result};
use crate::impact::{apply_impact, swing_foot_height, GUARD_EPS};
use crate::numerics::ode::{DenseStep, Dopri5, Tolerances};
use crate::numerics::roots::bisect;

/// Guard crossings with `|q_r|` below this are foot scuffs, not impacts.
pub const SCUFF_DEADBAND: f64 = 2.0 * std::f64::consts::PI / 180.0;
/// `q̇_N` that arms the speed-reversal check within a step.
pub const SPEED_ARM: f64 = 0.01;

/// Multiplicative errors applied to the plant model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerturbSpec(pub BTreeMap<String, f64>);

impl PerturbSpec {
    pub fn is_identity(&self) -> bool {
        self.0.values().all(|&f| f == 1.0)
    }
}

fn field<'a>(p: &'a mut RobotParams, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "leg_length" | "L" => &mut p.leg_length,
        "leg_mass" | "m_l" => &mut p.leg_mass,
        "leg_com_dist" | "l_c" => &mut p.leg_com_dist,
        "leg_inertia" | "I_l" => &mut p.leg_inertia,
        "hip_mass" | "m_h" => &mut p.hip_mass,
        "disc_inertia" | "J_d" => &mut p.disc_inertia,
        "gravity" | "g" => &mut p.gravity,
        _ => return None,
    })
}

pub fn perturb_params(p: &RobotParams, spec: &PerturbSpec) -> Result<RobotParams> {
    let mut out = *p;
    for (key, &factor) in &spec.0 {
        if !(factor > 0.5 && factor < 2.0) {
            return Err(Error::OutOfBounds { key: key.clone(), factor });
        }
        let f = field(&mut out, key).ok_or_else(|| Error::InvalidParams(format!("unknown parameter `{key}`")))?;
        *f *= factor;
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial_q: GenPos,
    pub initial_v: GenVel,
    pub steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_step_duration: f64,
    pub param_error: PerturbSpec,
    /// Trace sampling interval (s).
    pub trace_dt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            initial_q: GenPos::new(0.0, (-20f64).to_radians(), (-10f64).to_radians()),
            initial_v: GenVel::default(),
            steps: 15,
            rtol: 1e-10,
            atol: 1e-12,
            max_step_duration: 20.0,
            param_error: PerturbSpec::default(),
            trace_dt: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.trace_dt > 0.0 && self.max_step_duration > 0.0) {
            return Err(Error::InvalidParams("tolerances and durations must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParams("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFlag {
    Flow,
    Impact,
}

/// One trace row. Column order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub step: usize,
    pub q_d: f64,
    pub q_r: f64,
    pub q_n: f64,
    pub dq_d: f64,
    pub dq_r: f64,
    pub dq_n: f64,
    pub sigma_n: f64,
    pub h_r: f64,
    pub dh_r: f64,
    pub b: f64,
    pub c: f64,
    pub u_d: f64,
    pub u_r: f64,
    pub p2: f64,
    pub event: EventFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactEvent {
    pub step: usize,
    pub t: f64,
    pub pre: State,
    pub post: State,
    /// Transverse coordinates seen by the controller just before impact.
    pub y_pre: YState,
    pub y_post: YState,
    pub impulse: Vector2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub impacts: Vec<ImpactEvent>,
}

impl Trace {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Plant model, controller and integration settings for one run.
pub struct Simulator<'a> {
    pub plant: RobotParams,
    pub ctrl: &'a Controller,
    pub tol: Tolerances,
    pub max_step_duration: f64,
    pub trace_dt: Option<f64>,
}

fn pack(q: &GenPos, v: &GenVel) -> [f64; 6] {
    [q.qd, q.qr, q.qn, v.dqd, v.dqr, v.dqn]
}

fn unpack(y: &[f64; 6]) -> (GenPos, GenVel) {
    (GenPos::new(y[0], y[1], y[2]), GenVel::new(y[3], y[4], y[5]))
}

/// How a flow segment ended.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub t: f64,
    pub state: State,
    /// Pre-impact state reached (as opposed to `t_end`).
    pub hit_guard: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(plant: RobotParams, ctrl: &'a Controller) -> Self {
        Self { plant, ctrl, tol: Tolerances::default(), max_step_duration: 20.0, trace_dt: None }
    }

    pub fn from_config(plant: RobotParams, ctrl: &'a Controller, cfg: &SimConfig) -> Self {
        Self {
            plant,
            ctrl,
            tol: cfg.tolerances(),
            max_step_duration: cfg.max_step_duration,
            trace_dt: Some(cfg.trace_dt),
        }
    }

    /// The controller measures `(q, q̇)` and forms `ω` with its own model.
    fn control_at(&self, q: &GenPos, v: &GenVel) -> Result<ControlOutput> {
        let x = State { q: *q, w: omega_from_vel(&self.ctrl.params, q, v) };
        self.ctrl.control(&x)
    }

    fn rhs(&self, y: &[f64; 6]) -> Result<[f64; 6]> {
        let (q, v) = unpack(y);
        let u = self.control_at(&q, &v)?.u;
        let a = accelerations(&self.plant, &q, &v, u);
        Ok([v.dqd, v.dqr, v.dqn, a[0], a[1], a[2]])
    }

    fn record(&self, t: f64, step: usize, y: &[f64; 6], event: EventFlag) -> Result<TraceRecord> {
        let (q, v) = unpack(y);
        let out = self.control_at(&q, &v)?;
        Ok(TraceRecord {
            t,
            step,
            q_d: q.qd,
            q_r: q.qr,
            q_n: q.qn,
            dq_d: v.dqd,
            dq_r: v.dqr,
            dq_n: v.dqn,
            sigma_n: crate::dynamics::momentum(&self.plant, &q, &v),
            h_r: out.y.hr,
            dh_r: out.y.dhr,
            b: out.y.b,
            c: out.y.c,
            u_d: out.u[0],
            u_r: out.u[1],
            p2: swing_foot_height(&self.plant, &q),
            event,
        })
    }

    fn guard_value(&self, y: &[f64; 6]) -> f64 {
        let (q, _) = unpack(y);
        swing_foot_height(&self.plant, &q)
    }

    /// Locate a `+ → −` crossing of `p₂` inside an accepted step.
    fn localize(&self, d: &DenseStep<6>) -> Option<(f64, [f64; 6])> {
        let t = bisect(|t| self.guard_value(&d.eval(t)), d.t0, d.t1(), 0.1 * GUARD_EPS)?;
        Some((t, d.eval(t)))
    }

    /// Integrate from `x` (plant coordinates) at time `t0` until the swing
    /// foot strikes or `t0 + dt_max`.
    pub fn flow_step(
        &self,
        x: &State,
        t0: f64,
        dt_max: f64,
        step: usize,
        records: &mut Vec<TraceRecord>,
    ) -> Result<FlowOutcome> {
        let v0 = vel_from_omega(&self.plant, &x.q, &x.w)?;
        let y0 = pack(&x.q, &v0);
        let mut f = |_: f64, y: &[f64; 6]| self.rhs(y);
        let mut ode = Dopri5::new(&mut f, t0, y0, self.tol)?;
        let t_end = t0 + dt_max;
        if let Some(dt) = self.trace_dt {
            ode.h_max = 10.0 * dt;
        }
        // Post-impact rows already cover `t0`.
        let mut k: u64 = if records.last().is_some_and(|r| r.t == t0) { 1 } else { 0 };
        let mut armed = x.w.dqn > SPEED_ARM;
        let finish = |t: f64, y: &[f64; 6], hit: bool| {
            let (q, v) = unpack(y);
            FlowOutcome { t, state: State { q, w: omega_from_vel(&self.plant, &q, &v) }, hit_guard: hit }
        };
        loop {
            let y_prev = ode.y;
            let dense = ode.step(&mut f, t_end)?;
            let mut end = (ode.t, ode.y, false);
            if self.guard_value(&y_prev) > 0.0 && self.guard_value(&ode.y) <= 0.0 {
                if let Some((tc, yc)) = self.localize(&dense) {
                    if yc[1].abs() >= SCUFF_DEADBAND {
                        end = (tc, yc, true);
                    }
                }
            }
            if let Some(dt) = self.trace_dt {
                loop {
                    let ts = t0 + k as f64 * dt;
                    if ts > end.0 || (end.2 && ts == end.0) {
                        break;
                    }
                    records.push(self.record(ts, step, &dense.eval(ts), EventFlag::Flow)?);
                    k += 1;
                }
            }
            let (t, y, hit) = end;
            if hit {
                return Ok(finish(t, &y, true));
            }
            if y[2].abs() > std::f64::consts::FRAC_PI_2 {
                return Err(Error::FellOver { t, q_n: y[2] });
            }
            if y[5] > SPEED_ARM {
                armed = true;
            }
            if armed && y[5] <= 0.0 {
                return Err(Error::SpeedReversal { t, dq_n: y[5] });
            }
            if t >= t_end {
                return Ok(finish(t, &y, false));
            }
        }
    }

    /// Walk `steps` steps, returning whatever was logged even on failure.
    pub fn walk_partial(&self, x0: &State, steps: usize) -> (Trace, Result<()>) {
        let mut trace = Trace::default();
        let res = self.walk_into(x0, steps, &mut trace);
        (trace, res)
    }

    fn walk_into(&self, x0: &State, steps: usize, trace: &mut Trace) -> Result<()> {
        let mut x = *x0;
        let mut t = 0.0;
        for step in 0..steps {
            let out = self.flow_step(&x, t, self.max_step_duration, step, &mut trace.records)?;
            if !out.hit_guard {
                return Err(Error::StallTimeout { step, limit: self.max_step_duration });
            }
            let imp = apply_impact(&self.plant, &out.state)?;
            let y_pre = self.ctrl_y(&self.plant, &out.state)?;
            let y_post = self.ctrl_y(&self.plant, &imp.post_state)?;
            if self.trace_dt.is_some() {
                let vp = vel_from_omega(&self.plant, &out.state.q, &out.state.w)?;
                trace.records.push(self.record(out.t, step, &pack(&out.state.q, &vp), EventFlag::Impact)?);
                let v = vel_from_omega(&self.plant, &imp.post_state.q, &imp.post_state.w)?;
                trace.records.push(self.record(out.t, step + 1, &pack(&imp.post_state.q, &v), EventFlag::Impact)?);
            }
            trace.impacts.push(ImpactEvent {
                step,
                t: out.t,
                pre: out.state,
                post: imp.post_state,
                y_pre,
                y_post,
                impulse: imp.impulse,
            });
            x = imp.post_state;
            t = out.t;
        }
        Ok(())
    }

    /// Controller-view `y` of a plant state.
    fn ctrl_y(&self, plant: &RobotParams, x: &State) -> Result<YState> {
        let v = vel_from_omega(plant, &x.q, &x.w)?;
        Ok(self.control_at(&x.q, &v)?.y)
    }
}

/// Run a full walk from the configured initial condition.
pub fn walk(plant: &RobotParams, ctrl: &Controller, cfg: &SimConfig) -> Result<Trace> {
    let (trace, res) = walk_with_partial(plant, ctrl, cfg);
    res.map(|_| trace)
}

pub fn walk_with_partial(plant: &RobotParams, ctrl: &Controller, cfg: &SimConfig) -> (Trace, Result<()>) {
    if let Err(e) = cfg.validate() {
        return (Trace::default(), Err(e));
    }
    let sim = Simulator::from_config(*plant, ctrl, cfg);
    let x0 = State { q: cfg.initial_q, w: omega_from_vel(plant, &cfg.initial_q, &cfg.initial_v) };
    sim.walk_partial(&x0, cfg.steps)
}

/// Post-impact point of the nominal gait, in plant coordinates.
pub fn nominal_start(p: &RobotParams, ctrl: &Controller) -> Result<(GenPos, GenVel)> {
    let g = &ctrl.gait;
    let (v, _) = g.speed(g.qn_plus)?;
    let (_, dh, _) = g.href(g.qn_plus)?;
    let q = g.q_bar_plus;
    let w = crate::dynamics::Omega::new(g.sigma_n_plus, dh * v, v);
    Ok((q, vel_from_omega(p, &q, &w)?))
}

/// Unactuated flow of the pinned chain over `[0, t_end]`.
pub fn free_flow(p: &RobotParams, q: &GenPos, v: &GenVel, t_end: f64, tol: Tolerances) -> Result<(GenPos, GenVel)> {
    let f = |_: f64, y: &[f64; 6]| {
        let (q, v) = unpack(y);
        let a = accelerations(p, &q, &v, [0.0, 0.0]);
        Ok([v.dqd, v.dqr, v.dqn, a[0], a[1], a[2]])
    };
    let y = crate::numerics::ode::integrate(f, 0.0, pack(q, v), t_end, tol)?;
    Ok(unpack(&y))
}
