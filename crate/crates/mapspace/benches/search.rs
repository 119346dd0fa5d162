//! Search-throughput benchmarks: one worker against a thread-pool run of
//! the same decoupled search, and the off-chip stage on its own.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mapspace::offchip::DbOptions;
use mapspace::workloads::{make_conv2d, Conv2dParams};
use mapspace::{decoupled_optimize, optimize_offchip, AcceleratorConfig, PruningFlags, SearchGoal};

fn layer() -> mapspace::LoopNest {
    make_conv2d(&Conv2dParams::new("bench_layer", 16, 16, 8, 1, 1)).unwrap()
}

fn bench_decoupled(c: &mut Criterion) {
    let nest = layer();
    let hw = AcceleratorConfig::preset("p1").unwrap();
    let flags = PruningFlags::default();
    let opts = DbOptions::default();
    let mut group = c.benchmark_group("decoupled_optimize");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(
            BenchmarkId::from_parameter(workers),
            &workers,
            |b, &workers| {
                b.iter(|| {
                    decoupled_optimize(&nest, &hw, &[SearchGoal::Runtime], &flags, &opts, workers)
                        .unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_offchip(c: &mut Criterion) {
    let nest = layer();
    let hw = AcceleratorConfig::preset("p1").unwrap();
    let flags = PruningFlags::default();
    let opts = DbOptions::default();
    let mut group = c.benchmark_group("optimize_offchip");
    for workers in [1usize, 4] {
        group.bench_with_input(
            BenchmarkId::from_parameter(workers),
            &workers,
            |b, &workers| b.iter(|| optimize_offchip(&nest, &hw, &flags, &opts, workers).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_decoupled, bench_offchip);
criterion_main!(benches);
