use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use omnipipe::modality::{melspec_with, N_SAMPLES};
use omnipipe::numkit::{conv1d_with, matmul_with};
use omnipipe::packing::{pack, packed_attention_with, IsolationMask, PackPolicy};
use omnipipe::{Exec, Tensor};

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn filled(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0)
}

fn bench_matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul_256");
    let (a, b) = (filled(&[256, 256]), filled(&[256, 256]));
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| matmul_with(exec, black_box(&a), black_box(&b)).unwrap())
        });
    }
    g.finish();
}

fn bench_conv1d(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv1d_rate4");
    let x = filled(&[400, 64]);
    let k = filled(&[4, 64, 256]);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| conv1d_with(exec, black_box(&x), black_box(&k), 4, 0).unwrap())
        });
    }
    g.finish();
}

fn bench_melspec(c: &mut Criterion) {
    let mut g = c.benchmark_group("melspec_30s");
    g.sample_size(10);
    let wave: Vec<f64> = (0..N_SAMPLES).map(|n| (n as f64 * 0.0173).sin() * 0.3).collect();
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| melspec_with(exec, black_box(&wave)).unwrap())
        });
    }
    g.finish();
}

fn bench_packed_attention(c: &mut Criterion) {
    let mut g = c.benchmark_group("packed_attention_512");
    let lens = [120, 64, 200, 90, 30];
    let batch = pack(&lens, 512, PackPolicy::FirstFit).unwrap();
    let mask = IsolationMask::from_cu_seqlens(&batch.bins[0].cu_seqlens, 512).unwrap();
    let tokens = filled(&[512, 64]);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| packed_attention_with(exec, black_box(&tokens), black_box(&mask)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_matmul,
    bench_conv1d,
    bench_melspec,
    bench_packed_attention
);
criterion_main!(benches);
