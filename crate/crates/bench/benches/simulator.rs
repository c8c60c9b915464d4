// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use shadownav_bench::{default_scene, SEED};
use shadownav_core::engine::run_batch;
use shadownav_core::geometry::ray_sphere_far_intersection;
use shadownav_core::{observe, run_episode, EyeModel, Vec3};

fn geometry(c: &mut Criterion) {
    let eye = EyeModel::default();
    let light = Vec3::new(-4.9, 7.0, 5.5);
    let obj = Vec3::new(0.6, -1.0, -9.0);
    c.bench_function("ray_sphere_far_intersection", |b| {
        b.iter(|| ray_sphere_far_intersection(black_box(light), black_box(obj), &eye))
    });
}

fn features(c: &mut Criterion) {
    let (cfg, scene) = default_scene();
    c.bench_function("observe", |b| b.iter(|| observe(black_box(&scene), &cfg.observe)));
}

fn episodes(c: &mut Criterion) {
    let (cfg, scene) = default_scene();
    c.bench_function("run_episode", |b| b.iter(|| run_episode(black_box(&scene), &cfg)));
    let mut g = c.benchmark_group("batch");
    g.sample_size(10);
    g.bench_function("run_batch_64", |b| b.iter(|| run_batch(&cfg, SEED, black_box(64))));
    g.finish();
}

criterion_group!(benches, geometry, features, episodes);
criterion_main!(benches);
