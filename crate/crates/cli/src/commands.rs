use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use discwalk::gait::design_gait;
use discwalk::sim::{perturb_params, walk_with_partial, ImpactEvent};
use discwalk::stability::stability_report;
use discwalk::{Controller, Error, Gains, GaitSpec, RobotParams, StabilityReport, Trace};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::plot::Chart;

/// Process exit status with a message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn config(msg: impl ToString) -> Self {
        Self { code: 1, msg: msg.to_string() }
    }
    fn design(e: Error) -> Self {
        Self { code: 2, msg: format!("gait design failed: {e}") }
    }
    fn sim(e: Error) -> Self {
        Self { code: 3, msg: format!("simulation failed: {e}") }
    }
    fn analysis(e: Error) -> Self {
        Self { code: 4, msg: format!("stability analysis failed: {e}") }
    }
}

type Outcome = Result<(), Failure>;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub gait: Option<PathBuf>,
}

impl Context {
    fn out_dir(&self) -> Result<&Path, Failure> {
        let d = self.cfg.output_dir.as_path();
        fs::create_dir_all(d).map_err(|e| Failure::config(format!("{}: {e}", d.display())))?;
        Ok(d)
    }

    /// Record the effective configuration next to the results.
    fn write_config(&self) -> Outcome {
        let text = self.cfg.to_toml_string().map_err(Failure::config)?;
        self.write("resolved_config.toml", &text)
    }

    fn write(&self, name: &str, contents: &str) -> Outcome {
        let path = self.out_dir()?.join(name);
        fs::write(&path, contents).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    fn validate(&self) -> Outcome {
        self.cfg.robot.validate().map_err(Failure::config)?;
        self.cfg.gains.validate().map_err(Failure::config)
    }

    /// Load the gait file if one was given, otherwise design it from the config.
    fn gait(&self) -> Result<GaitSpec, Failure> {
        match &self.gait {
            Some(p) => GaitSpec::load(p).map_err(Failure::config),
            None => design_gait(&self.cfg.robot, &self.cfg.gait.request()).map_err(Failure::design),
        }
    }
}

pub fn design(ctx: &Context) -> Outcome {
    ctx.validate()?;
    ctx.write_config()?;
    let g = design_gait(&ctx.cfg.robot, &ctx.cfg.gait.request()).map_err(Failure::design)?;
    let path = ctx.out_dir()?.join("gait.toml");
    g.save(&path).map_err(Failure::config)?;
    let r = g.periodicity_residual().map_err(Failure::design)?;
    println!("gait written to {}", path.display());
    println!("speed scale theta       {:.12}", g.speed.theta);
    println!("sigma_N+                {:.12}", g.sigma_n_plus);
    println!("delta_sigma             {:.12}", g.delta_sigma);
    println!("periodicity residual r  {r:.3e}");
    Ok(())
}

#[derive(Serialize)]
struct ImpactRow {
    step: usize,
    t: f64,
    norm_y_pre: f64,
    norm_y_post: f64,
    h_r: f64,
    dh_r: f64,
    b: f64,
    c: f64,
    impulse_x: f64,
    impulse_y: f64,
}

impl From<&ImpactEvent> for ImpactRow {
    fn from(i: &ImpactEvent) -> Self {
        Self {
            step: i.step,
            t: i.t,
            norm_y_pre: i.y_pre.norm(),
            norm_y_post: i.y_post.norm(),
            h_r: i.y_pre.hr,
            dh_r: i.y_pre.dhr,
            b: i.y_pre.b,
            c: i.y_pre.c,
            impulse_x: i.impulse[0],
            impulse_y: i.impulse[1],
        }
    }
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(Failure::config)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(Failure::config)
}

fn summary(trace: &Trace, steps: usize, status: &Result<(), Error>, ctx: &Context) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "impacts: {} of {steps} requested", trace.impacts.len());
    let _ = writeln!(s, "status: {}", status.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()));
    let pe = &ctx.cfg.sim.param_error.0;
    if !pe.is_empty() {
        let v: Vec<String> = pe.iter().map(|(k, f)| format!("{k}={f}")).collect();
        let _ = writeln!(s, "plant errors: {}", v.join(" "));
    }
    let _ = writeln!(s, "{:>5} {:>12} {:>12} {:>12} {:>10}", "step", "t [s]", "|y-|", "|y+|", "|Fx/Fy|");
    for i in &trace.impacts {
        let slip = (i.impulse[0] / i.impulse[1]).abs();
        let _ = writeln!(
            s,
            "{:>5} {:>12.6} {:>12.4e} {:>12.4e} {:>10.4}",
            i.step,
            i.t,
            i.y_pre.norm(),
            i.y_post.norm(),
            slip
        );
    }
    if let Some(r) = trace.records.last() {
        // The disc angle is measured from the leg bisector.
        let abs = r.dq_d + r.dq_n + 0.5 * r.dq_r;
        let _ = writeln!(s, "final disc speed: {abs:.6} rad/s absolute, {:.6} rad/s relative to the legs", r.dq_d);
    }
    s
}

pub fn simulate(ctx: &Context) -> Outcome {
    ctx.validate()?;
    ctx.write_config()?;
    let gait = ctx.gait()?;
    let ctrl = Controller::new(ctx.cfg.robot, gait, ctx.cfg.gains);
    let plant = perturb_params(&ctx.cfg.robot, &ctx.cfg.sim.param_error).map_err(Failure::config)?;
    let sim_cfg = ctx.cfg.sim.sim_config(&ctrl).map_err(Failure::sim)?;
    sim_cfg.validate().map_err(Failure::config)?;
    let (trace, status) = walk_with_partial(&plant, &ctrl, &sim_cfg);

    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(Failure::config)?;
    ctx.write("trace.csv", &String::from_utf8(buf).map_err(Failure::config)?)?;
    ctx.write("impacts.csv", &csv_string(trace.impacts.iter().map(ImpactRow::from))?)?;
    let text = summary(&trace, sim_cfg.steps, &status, ctx);
    ctx.write("summary.txt", &text)?;
    print!("{text}");

    let qn: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.t, r.q_n.to_degrees())).collect();
    let phase: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.q_n.to_degrees(), r.dq_n.to_degrees())).collect();
    let ynorm: Vec<(f64, f64)> = trace.impacts.iter().map(|i| (i.step as f64, i.y_pre.norm())).collect();
    let charts = [
        (
            "q_n.svg",
            Chart { title: "Stance angle", x_label: "t [s]", y_label: "q_N [deg]", log_y: false, markers: false },
            qn,
        ),
        (
            "phase.svg",
            Chart {
                title: "Stance phase portrait",
                x_label: "q_N [deg]",
                y_label: "dq_N/dt [deg/s]",
                log_y: false,
                markers: false,
            },
            phase,
        ),
        (
            "y_norm.svg",
            Chart {
                title: "Transverse error before each impact",
                x_label: "step",
                y_label: "|y| (log10)",
                log_y: true,
                markers: true,
            },
            ynorm,
        ),
    ];
    for (name, chart, pts) in &charts {
        ctx.write(name, &chart.render(pts))?;
    }
    status.map_err(Failure::sim)
}

#[derive(Serialize)]
struct SweepRow {
    kp: f64,
    kv: f64,
    beta0: f64,
    gamma: f64,
    status: String,
    spectral_radius: Option<f64>,
    pass: Option<bool>,
    fd_spectral_radius: Option<f64>,
    jacobian_error: Option<f64>,
    measured_contraction: Option<f64>,
    eig1_abs: Option<f64>,
    eig2_abs: Option<f64>,
    eig3_abs: Option<f64>,
    eig4_abs: Option<f64>,
}

fn sweep_row(g: Gains, r: &discwalk::Result<StabilityReport>) -> SweepRow {
    let ok = r.as_ref().ok();
    let eig = |k: usize| ok.and_then(|r| r.eigenvalues.get(k)).map(|z| z.norm());
    SweepRow {
        kp: g.kp,
        kv: g.kv,
        beta0: g.beta0,
        gamma: g.gamma,
        status: r.as_ref().map_or_else(|e| format!("error: {e}"), |_| "ok".into()),
        spectral_radius: ok.map(|r| r.spectral_radius),
        pass: ok.map(|r| r.pass),
        fd_spectral_radius: ok.map(|r| r.fd_spectral_radius),
        jacobian_error: ok.map(|r| r.jacobian_error),
        measured_contraction: ok.map(|r| r.measured_contraction()),
        eig1_abs: eig(0),
        eig2_abs: eig(1),
        eig3_abs: eig(2),
        eig4_abs: eig(3),
    }
}

fn run_grid(robot: &RobotParams, gait: &GaitSpec, grid: &[Gains]) -> Vec<(Gains, discwalk::Result<StabilityReport>)> {
    grid.par_iter().map(|g| (*g, stability_report(robot, gait, g))).collect()
}

pub fn stability(ctx: &Context) -> Outcome {
    ctx.validate()?;
    ctx.write_config()?;
    let gait = ctx.gait()?;
    let report = stability_report(&ctx.cfg.robot, &gait, &ctx.cfg.gains).map_err(Failure::analysis)?;
    let text = report.to_text();
    ctx.write("stability.txt", &text)?;
    print!("{text}");
    let rows = run_grid(&ctx.cfg.robot, &gait, &ctx.cfg.sweep.gains(&ctx.cfg.gains));
    ctx.write("stability.csv", &csv_string(rows.iter().map(|(g, r)| sweep_row(*g, r)))?)
}

pub fn sweep(ctx: &Context) -> Outcome {
    ctx.cfg.robot.validate().map_err(Failure::config)?;
    ctx.write_config()?;
    let gait = ctx.gait()?;
    let rows = run_grid(&ctx.cfg.robot, &gait, &ctx.cfg.sweep.gains(&ctx.cfg.gains));
    ctx.write("sweep.csv", &csv_string(rows.iter().map(|(g, r)| sweep_row(*g, r)))?)?;
    for (g, r) in &rows {
        match r {
            Ok(r) => println!(
                "K_P={} K_V={} beta0={} gamma={}: rho={:.6e} {}",
                g.kp,
                g.kv,
                g.beta0,
                g.gamma,
                r.spectral_radius,
                if r.pass { "stable" } else { "NOT stable" }
            ),
            Err(e) => println!("K_P={} K_V={} beta0={} gamma={}: {e}", g.kp, g.kv, g.beta0, g.gamma),
        }
    }
    if rows.iter().all(|(_, r)| r.is_err()) {
        return Err(Failure { code: 4, msg: "every gain set failed".into() });
    }
    Ok(())
}
