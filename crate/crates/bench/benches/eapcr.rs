use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eapcr_bench::{random_tensor, Workload};
use eapcr_core::model::predict;
use eapcr_core::trainer::{adam_step, loss_and_gradients, AdamState};
use eapcr_core::Tape;
use std::hint::black_box;

fn conv2d(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    for n in [9, 32] {
        let input = random_tensor(&[8, n, n], 1);
        let kernels = random_tensor(&[16, 8, 3, 3], 2);
        let bias = random_tensor(&[16], 3);
        g.bench_with_input(BenchmarkId::new("forward_backward", n), &n, |b, _| {
            b.iter(|| {
                let mut t = Tape::new();
                let x = t.leaf(input.clone().with_requires_grad(true)).unwrap();
                let k = t.leaf(kernels.clone().with_requires_grad(true)).unwrap();
                let bb = t.leaf(bias.clone().with_requires_grad(true)).unwrap();
                let y = t.conv2d(x, k, bb).unwrap();
                let p = t.maxpool2(y).unwrap();
                let s = t.sum(p).unwrap();
                black_box(t.backward(s).unwrap());
            })
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict_batch32");
    for (n, d) in [(9, 32), (9, 128), (32, 128)] {
        let w = Workload::new(n, d, 32);
        g.bench_function(BenchmarkId::from_parameter(format!("N{n}_d{d}")), |b| {
            b.iter(|| black_box(predict(&w.rows, &w.params, &w.spec).unwrap()))
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step_batch32");
    for (n, d) in [(9, 32), (9, 128)] {
        let w = Workload::new(n, d, 32);
        g.bench_function(BenchmarkId::from_parameter(format!("N{n}_d{d}")), |b| {
            let mut params = w.params.clone();
            let mut state = AdamState::new(params.named());
            b.iter(|| {
                let (loss, grads) = loss_and_gradients(&params, &w.spec, &w.rows, &w.targets).unwrap();
                adam_step(params.tensors_mut(), &grads, &mut state, 1e-4).unwrap();
                black_box(loss)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv2d, forward, train_step);
criterion_main!(benches);
