//! Per-kernel timings on a one-thread rayon pool versus the default pool.
//! Built with `--no-default-features` both variants run the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evseg::bei::{impulse_filter, render_bei};
use evseg::eval::{boundary_pr, canny, CannyConfig};
use evseg::pipeline::{Pipeline, PipelineConfig};
use evseg::superevents::{assign_step, init_grid, segment, ClusterConfig};
use evseg::synth::{render_frame, synth_generate, SyntheticSceneConfig};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    vec![
        ("1-thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn kernels(c: &mut Criterion) {
    let mut scene_cfg = SyntheticSceneConfig::square(240, 180, 80.0, 150.0, 0.4, 0.25);
    scene_cfg.noise_rate = 0.5;
    let scene = synth_generate(&scene_cfg).unwrap();
    let mut pipe = Pipeline::new(240, 180, PipelineConfig::default()).unwrap();
    for e in &scene.stream.events {
        pipe.push(e).unwrap();
    }
    let t = scene.stream.events.last().unwrap().t;
    let store = pipe.store().clone();
    let bei = impulse_filter(&render_bei(&store, t));
    let frame = render_frame(&scene_cfg, t);
    let ccfg = ClusterConfig::default();
    let (grid, cents) = init_grid(240, 180, ccfg.cell_size).unwrap();
    let seg = segment(&bei, &ccfg).unwrap();
    let edges = canny(&frame, &CannyConfig::default()).unwrap();
    let boundaries = evseg::superevents::extract_boundaries(&seg.labels);

    let mut g = c.benchmark_group("kernels");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("render_bei", name), |b| {
            pool.install(|| b.iter(|| render_bei(&store, t)))
        });
        g.bench_function(BenchmarkId::new("impulse_filter", name), |b| {
            pool.install(|| b.iter(|| impulse_filter(&bei)))
        });
        g.bench_function(BenchmarkId::new("assign_step", name), |b| {
            pool.install(|| b.iter(|| assign_step(&bei, &grid, &cents, &ccfg)))
        });
        g.bench_function(BenchmarkId::new("segment", name), |b| {
            pool.install(|| b.iter(|| segment(&bei, &ccfg).unwrap()))
        });
        g.bench_function(BenchmarkId::new("canny", name), |b| {
            pool.install(|| b.iter(|| canny(&frame, &CannyConfig::default()).unwrap()))
        });
        g.bench_function(BenchmarkId::new("boundary_pr", name), |b| {
            pool.install(|| b.iter(|| boundary_pr(&boundaries, &edges, 1).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
