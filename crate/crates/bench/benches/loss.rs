use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gtce::loss::{gradients, loss_from_logits};
use gtce_bench::multispeaker_instance;
use std::hint::black_box;

fn bench_loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("gtce_loss");
    for &(tokens, frames) in &[(8, 50), (32, 200), (64, 500)] {
        let (graph, logits) = multispeaker_instance(tokens, frames, 30);
        group.bench_with_input(
            BenchmarkId::new("forward", format!("{tokens}x{frames}")),
            &(graph.clone(), logits.clone()),
            |b, (g, l)| b.iter(|| loss_from_logits(black_box(g), black_box(l)).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("gradients", format!("{tokens}x{frames}")),
            &(graph, logits),
            |b, (g, l)| b.iter(|| gradients(black_box(g), black_box(l)).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_loss);
criterion_main!(benches);
