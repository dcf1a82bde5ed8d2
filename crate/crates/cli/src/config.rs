//! Experiment configuration file. Angles are in degrees here and converted to
//! radians at the boundary.

use std::path::{Path, PathBuf};

use discwalk::control::Gains;
use discwalk::sim::nominal_start;
use discwalk::{Controller, GaitRequest, GenPos, GenVel, PerturbSpec, RobotParams, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitBlock {
    pub qn_minus_deg: f64,
    pub qr_minus_deg: f64,
    /// `∂h_r^ref/∂q_N` just before impact (dimensionless).
    pub slope_minus: f64,
    /// Middle Bezier coefficient of the inter-leg reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bezier_free_deg: Option<f64>,
    pub v_a2: f64,
    pub v_a3: f64,
    pub s_nodes: usize,
    pub margin: f64,
}

impl Default for GaitBlock {
    fn default() -> Self {
        let r = GaitRequest::default();
        Self {
            qn_minus_deg: r.qn_minus.to_degrees(),
            qr_minus_deg: r.qr_minus.to_degrees(),
            slope_minus: r.slope_minus,
            bezier_free_deg: None,
            v_a2: r.v_a2,
            v_a3: r.v_a3,
            s_nodes: r.s_nodes,
            margin: r.margin,
        }
    }
}

impl GaitBlock {
    pub fn request(&self) -> GaitRequest {
        GaitRequest {
            qn_minus: self.qn_minus_deg.to_radians(),
            qr_minus: self.qr_minus_deg.to_radians(),
            slope_minus: self.slope_minus,
            bezier_free: self.bezier_free_deg.map(f64::to_radians),
            v_a2: self.v_a2,
            v_a3: self.v_a3,
            s_nodes: self.s_nodes,
            margin: self.margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlock {
    /// Start on the nominal gait right after an impact; ignores the initial state below.
    pub start_on_gait: bool,
    pub qd_deg: f64,
    pub qr_deg: f64,
    pub qn_deg: f64,
    pub dqd_deg_s: f64,
    pub dqr_deg_s: f64,
    pub dqn_deg_s: f64,
    pub steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_step_duration: f64,
    pub trace_dt: f64,
    /// Multiplicative plant errors, e.g. `{ hip_mass = 1.1 }`.
    pub param_error: PerturbSpec,
}

impl Default for SimBlock {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            start_on_gait: false,
            qd_deg: c.initial_q.qd.to_degrees(),
            qr_deg: c.initial_q.qr.to_degrees(),
            qn_deg: c.initial_q.qn.to_degrees(),
            dqd_deg_s: 0.0,
            dqr_deg_s: 0.0,
            dqn_deg_s: 0.0,
            steps: c.steps,
            rtol: c.rtol,
            atol: c.atol,
            max_step_duration: c.max_step_duration,
            trace_dt: c.trace_dt,
            param_error: c.param_error,
        }
    }
}

impl SimBlock {
    /// Simulation settings; the on-gait start is taken from `ctrl`'s nominal model.
    pub fn sim_config(&self, ctrl: &Controller) -> discwalk::Result<SimConfig> {
        let (initial_q, initial_v) = if self.start_on_gait {
            nominal_start(&ctrl.params, ctrl)?
        } else {
            (
                GenPos::new(self.qd_deg.to_radians(), self.qr_deg.to_radians(), self.qn_deg.to_radians()),
                GenVel::new(self.dqd_deg_s.to_radians(), self.dqr_deg_s.to_radians(), self.dqn_deg_s.to_radians()),
            )
        };
        Ok(SimConfig {
            initial_q,
            initial_v,
            steps: self.steps,
            rtol: self.rtol,
            atol: self.atol,
            max_step_duration: self.max_step_duration,
            param_error: self.param_error.clone(),
            trace_dt: self.trace_dt,
        })
    }
}

/// Gain values to sweep; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub kp: Vec<f64>,
    pub kv: Vec<f64>,
    pub beta0: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SweepGrid {
    /// Cartesian product over the listed values, in file order.
    pub fn gains(&self, base: &Gains) -> Vec<Gains> {
        let or_base = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
        let mut out = Vec::new();
        for &kp in &or_base(&self.kp, base.kp) {
            for &kv in &or_base(&self.kv, base.kv) {
                for &beta0 in &or_base(&self.beta0, base.beta0) {
                    for &gamma in &or_base(&self.gamma, base.gamma) {
                        out.push(Gains { kp, kv, beta0, gamma });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub robot: RobotParams,
    pub gait: GaitBlock,
    pub gains: Gains,
    pub sim: SimBlock,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            robot: RobotParams::default(),
            gait: GaitBlock::default(),
            gains: Gains::default(),
            sim: SimBlock::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn to_toml_string(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        let c = ExperimentConfig::default();
        let r = c.gait.request();
        let d = GaitRequest::default();
        assert!((r.qn_minus - d.qn_minus).abs() < 1e-15 && (r.qr_minus - d.qr_minus).abs() < 1e-15);
        assert_eq!(c.sim.qn_deg.round(), -10.0);
        assert_eq!(c.sim.qr_deg.round(), -20.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = ExperimentConfig::default();
        c.gait.bezier_free_deg = Some(-1.25);
        c.sim.param_error = PerturbSpec([("hip_mass".to_string(), 1.1)].into());
        c.sweep.gamma = vec![0.0, 0.35, 3.5];
        let text = c.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(ExperimentConfig::from_toml_str(&back.to_toml_string().unwrap()).unwrap(), back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("[gains]\ngamma = 0.5\n[robot]\nhip_mass = 12.0\n").unwrap();
        assert_eq!(c.gains.gamma, 0.5);
        assert_eq!(c.gains.kp, Gains::default().kp);
        assert_eq!(c.robot.hip_mass, 12.0);
        assert_eq!(c.robot.leg_mass, RobotParams::default().leg_mass);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "toml") {
                ExperimentConfig::load(&p).unwrap();
                n += 1;
            }
        }
        assert!(n >= 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[gains]\nkd = 1.0\n").is_err());
    }

    #[test]
    fn sweep_grid_product() {
        let base = Gains::default();
        assert_eq!(SweepGrid::default().gains(&base), vec![base]);
        let g = SweepGrid { gamma: vec![0.0, 0.35], kp: vec![50.0, 100.0, 200.0], ..Default::default() };
        let rows = g.gains(&base);
        assert_eq!(rows.len(), 6);
        assert_eq!((rows[1].kp, rows[1].gamma), (50.0, 0.35));
    }
}
