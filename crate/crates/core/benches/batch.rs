use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relucert::network::{evaluate_batch, Classification, Network, Norm};
use relucert::parallel::{run_batch, BatchConfig, Payload, WorkItem};
use relucert::properties::{encode, RobustnessSpec, VerifyConfig};

fn workload(seed: u64) -> (Arc<Network>, Vec<WorkItem>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Arc::new(Network::random(&mut rng, &[3, 10, 8, 5], 1.0).unwrap());
    let mut items = Vec::new();
    while items.len() < 48 {
        let x0: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        if net.classify(&x0).unwrap() == Classification::NoUniqueLabel {
            continue;
        }
        let spec = RobustnessSpec::local_confidence(x0, 0.15, 0.2, Norm::Linf);
        for q in encode(&net, &spec, &VerifyConfig::default()).unwrap() {
            items.push(WorkItem::new(items.len(), items.len() / 10, Payload::Disjunct(q)));
        }
    }
    (net, items)
}

fn bench_run_batch(c: &mut Criterion) {
    let (net, items) = workload(1);
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    let mut counts = vec![1, 4, max];
    counts.sort_unstable();
    counts.dedup();
    for workers in counts {
        let cfg = BatchConfig { early_stop: false, ..BatchConfig::with_workers(workers) };
        group.bench_with_input(BenchmarkId::new("workers", workers), &cfg, |b, cfg| {
            b.iter(|| run_batch(&net, black_box(items.clone()), cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Network::random(&mut rng, &[16, 64, 64, 10], 1.0).unwrap();
    let xs: Vec<Vec<f64>> = (0..4096).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut group = c.benchmark_group("evaluate");
    group.bench_function("sequential", |b| {
        b.iter(|| xs.iter().map(|x| net.evaluate(black_box(x)).unwrap()).collect::<Vec<_>>())
    });
    group.bench_function("batch", |b| b.iter(|| evaluate_batch(&net, black_box(&xs)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_run_batch, bench_evaluate);
criterion_main!(benches);
