//! Rayon pool vs a one-thread pool on the data-parallel hot spots.
//!
//! The one-thread pool runs the same code path as the parallel build, so the
//! gap isolates scheduling gains from algorithmic differences. For the fully
//! sequential build run `cargo test --no-default-features`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ibvs_core::harness::{run_scenario_with, run_seeds, RunOptions, Scenario};
use ibvs_core::imaging::render;
use ibvs_core::tracker::adaptive_hough;
use std::hint::black_box;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        (
            "sequential",
            rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap(),
        ),
        (
            "parallel",
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap(),
        ),
    ]
}

fn bench_frame(c: &mut Criterion) {
    let s = Scenario::builtin("disease").unwrap();
    let scene = s.resolved_scene().unwrap();
    let pose = s.initial_pose().unwrap();
    let frame = render(&scene, &pose, &s.intrinsics, 0.0, 1);
    let mut g = c.benchmark_group("frame");
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("render", label), |b| {
            pool.install(|| b.iter(|| render(black_box(&scene), &pose, &s.intrinsics, 0.0, 1)))
        });
        g.bench_function(BenchmarkId::new("hough", label), |b| {
            pool.install(|| b.iter(|| adaptive_hough(black_box(&frame), (10.0, 60.0))))
        });
    }
    g.finish();
}

fn bench_loop(c: &mut Criterion) {
    let s = Scenario::builtin("indoor_nominal").unwrap();
    let opts = RunOptions {
        max_iterations: Some(15),
    };
    let seeds: Vec<u64> = (0..8).collect();
    let mut g = c.benchmark_group("closed_loop");
    g.sample_size(10);
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("single_run", label), |b| {
            pool.install(|| b.iter(|| run_scenario_with(black_box(&s), opts, |_| {}).unwrap()))
        });
        let mut short = s.clone();
        short.max_duration = 0.5;
        g.bench_function(BenchmarkId::new("seed_sweep", label), |b| {
            pool.install(|| b.iter(|| run_seeds(black_box(&short), &seeds).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_frame, bench_loop);
criterion_main!(benches);
