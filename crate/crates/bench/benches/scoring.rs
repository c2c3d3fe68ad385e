use std::hint::black_box;

use bingear_bench::fixture;
use bingear_core::inference::{dot_pm1_with, top_k, BitwiseScorer, FusedScorer, Popcount, Scorer};
use bingear_core::quantize::PackedBits;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("dot_pm1");
    for dim in [64usize, 256, 1024] {
        let a = PackedBits::from_pm1(&(0..dim).map(|j| if j % 3 == 0 { 1 } else { -1 }).collect::<Vec<i8>>());
        let b = PackedBits::from_pm1(&(0..dim).map(|j| if j % 5 == 0 { -1 } else { 1 }).collect::<Vec<i8>>());
        let mut modes = vec![("portable", Popcount::Portable)];
        if Popcount::detect() != Popcount::Portable {
            modes.push(("hardware", Popcount::detect()));
        }
        for (name, mode) in modes {
            group.bench_with_input(BenchmarkId::new(name, dim), &dim, |bench, _| {
                bench.iter(|| dot_pm1_with(black_box(a.as_ref()), black_box(b.as_ref()), mode).unwrap())
            });
        }
    }
    group.finish();
}

fn full_corpus(c: &mut Criterion) {
    let fx = fixture(200, 4000, 256, 2);
    let bitwise = BitwiseScorer::new(&fx.model.table, &fx.model.weights);
    let float = FusedScorer::from_table(&fx.model.table, &fx.model.weights);
    let mut out = vec![0.0f32; bitwise.num_items()];

    let mut group = c.benchmark_group("score_user_d256");
    group.throughput(Throughput::Elements(bitwise.num_items() as u64));
    group.bench_function("bitwise", |b| b.iter(|| bitwise.score_user(black_box(3), &mut out)));
    group.bench_function("float", |b| b.iter(|| float.score_user(black_box(3), &mut out)));
    group.finish();

    bitwise.score_user(3, &mut out);
    let exclude = fx.ds.train_items(3).to_vec();
    c.bench_function("top_k_20", |b| b.iter(|| top_k(black_box(&out), 20, &exclude)));
}

criterion_group!(benches, kernels, full_corpus);
criterion_main!(benches);
