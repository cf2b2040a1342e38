//! Hot paths of the neighbour search: the bounded distance kernel on its
//! own, then full batch queries at pipeline-like sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use sgval_bench::random_matrix;
use sgval_core::{squared_distance, AttributeGraph};

fn bench_distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("squared_distance");
    for &z in &[8usize, 32, 64, 256] {
        let pair = random_matrix(z as u64, 2, z);
        group.throughput(Throughput::Elements(z as u64));
        group.bench_with_input(BenchmarkId::from_parameter(z), &z, |b, _| {
            b.iter(|| squared_distance(black_box(pair.row(0)), black_box(pair.row(1))))
        });
    }
    group.finish();
}

fn bench_batch_knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_knn");
    group.sample_size(10);
    for &n in &[500usize, 2000] {
        let graph = AttributeGraph::from_nodes(random_matrix(n as u64, n * 3, 32), 3).unwrap();
        group.bench_with_input(BenchmarkId::new("images", n), &n, |b, _| {
            b.iter(|| graph.batch_knn(50).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_distance, bench_batch_knn);
criterion_main!(benches);
