use criterion::{criterion_group, criterion_main, Criterion};
use discwalk::dynamics::{dyn_terms, GenPos, GenVel};
use discwalk::gait::design_gait;
use discwalk::impact::delta_omega;
use discwalk::sim::{nominal_start, Simulator};
use discwalk::stability::{phi_y, stability_report};
use discwalk::{Controller, Gains, GaitRequest, RobotParams, State};
use std::hint::black_box;

fn dynamics(c: &mut Criterion) {
    let p = RobotParams::default();
    let q = GenPos::new(0.1, -0.4, 0.2);
    let v = GenVel::new(0.3, 1.1, -0.7);
    c.bench_function("dyn_terms", |b| b.iter(|| dyn_terms(&p, black_box(&q), black_box(&v))));
    c.bench_function("delta_omega", |b| b.iter(|| delta_omega(&p, black_box(-0.52), black_box(0.26))));
}

fn synthesis(c: &mut Criterion) {
    let p = RobotParams::default();
    let req = GaitRequest::default();
    let mut g = c.benchmark_group("design");
    g.sample_size(10);
    g.bench_function("design_gait", |b| b.iter(|| design_gait(&p, black_box(&req)).unwrap()));
    g.finish();
}

fn closed_loop(c: &mut Criterion) {
    let p = RobotParams::default();
    let gait = design_gait(&p, &GaitRequest::default()).unwrap();
    let ctrl = Controller::new(p, gait.clone(), Gains::default());
    let (q, v) = nominal_start(&p, &ctrl).unwrap();
    let x = State { q, w: discwalk::dynamics::omega_from_vel(&p, &q, &v) };
    let sim = Simulator::new(p, &ctrl);
    let mut g = c.benchmark_group("closed_loop");
    g.sample_size(20);
    g.bench_function("control_law", |b| b.iter(|| ctrl.control(black_box(&x)).unwrap()));
    g.bench_function("flow_one_step", |b| b.iter(|| sim.flow_step(&x, 0.0, 5.0, 0, &mut Vec::new()).unwrap()));
    g.bench_function("phi_y", |b| b.iter(|| phi_y(&p, &gait, &Gains::default(), gait.qn_minus).unwrap()));
    g.bench_function("stability_report", |b| b.iter(|| stability_report(&p, &gait, &Gains::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, dynamics, synthesis, closed_loop);
criterion_main!(benches);
