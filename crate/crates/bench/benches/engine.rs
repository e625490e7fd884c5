use ads_bench::random_batch;
use ads_core::clrun::train_task;
use ads_core::nncore::{spectral_norm, SPECTRAL_TOL};
use ads_core::{ArchitectureSpec, DenseNet, OptimizerState};
use criterion::{criterion_group, criterion_main, Criterion};

fn engine(c: &mut Criterion) {
    let spec = ArchitectureSpec::from_widths(vec![784, 512, 256, 512, 10]).unwrap();
    let net = DenseNet::init(&spec, 1).unwrap();
    let data = random_batch(128, 784, 2);
    let mut g = c.benchmark_group("engine");
    g.sample_size(20);
    g.bench_function("forward_backward_b128", |b| {
        b.iter(|| {
            let trace = net.forward(data.images.view()).unwrap();
            net.loss_and_backward(&trace, &data.labels).unwrap()
        })
    });
    g.bench_function("logit_gradient_b128", |b| b.iter(|| net.logit_gradient(data.images.view(), &data.labels).unwrap()));
    g.bench_function("train_4_steps", |b| {
        b.iter_batched(
            || {
                let n = net.clone();
                let s = OptimizerState::new(&n, 1e-3, 0.9, 5e-4).unwrap();
                (n, s)
            },
            |(mut n, mut s)| train_task(&mut n, &mut s, &random_batch(512, 784, 3), 4, 128, 0, None).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    g.bench_function("spectral_norm_512x784", |b| b.iter(|| spectral_norm(net.weights()[0].view(), SPECTRAL_TOL)));
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
