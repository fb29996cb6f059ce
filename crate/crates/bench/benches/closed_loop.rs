use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use stochcbf_core::barrier::evaluate;
use stochcbf_core::controller::phi_n;
use stochcbf_core::harness::{builtin_scenario, run_trial};
use stochcbf_core::lidar::{raycast, sensor_pose_from};
use stochcbf_core::{ItoForm, PreInput};

fn barrier(c: &mut Criterion) {
    let s = builtin_scenario("exp2n").unwrap();
    let scan = s.initial_scan().unwrap();
    let noise = s.controller_noise();
    c.bench_function("evaluate initial scan", |b| {
        b.iter(|| evaluate(black_box(&scan), &s.vehicle, &noise, ItoForm::HessianExact).unwrap())
    });
    let eval = evaluate(&scan, &s.vehicle, &noise, ItoForm::HessianExact).unwrap();
    let pre = PreInput { v_o: 0.2, w_o: 0.2 };
    c.bench_function("phi_n", |b| {
        b.iter(|| phi_n(black_box(&eval), pre, &s.controller).unwrap())
    });
}

fn lidar(c: &mut Criterion) {
    let s = builtin_scenario("exp2n").unwrap();
    let stochcbf_core::harness::InitialState::Pose(pose) = s.initial else {
        unreachable!("builtins start from a pose")
    };
    let sensor = sensor_pose_from(&pose, &s.vehicle);
    c.bench_function("raycast 279 beams", |b| {
        b.iter(|| raycast(&s.environment, black_box(&sensor), s.vehicle.n_beams).unwrap())
    });
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trial");
    group.sample_size(10);
    for name in ["exp2n", "exp2d"] {
        let mut s = builtin_scenario(name).unwrap();
        s.horizon = 5.0;
        group.bench_function(format!("{name} 5 s"), |b| {
            b.iter(|| run_trial(&s, black_box(0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, barrier, lidar, trials);
criterion_main!(benches);
