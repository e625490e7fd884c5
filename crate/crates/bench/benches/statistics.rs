use ads_bench::random_pair;
use ads_core::archpool::{generate_pool, PoolConfig};
use ads_core::calib::CalibrationParams;
use ads_core::compute_ads;
use ads_core::stats::{self, CorrelationSettings};
use criterion::{criterion_group, criterion_main, Criterion};

fn statistics(c: &mut Criterion) {
    let (x, y) = random_pair(175, 5);
    let mut g = c.benchmark_group("statistics");
    g.sample_size(20);
    g.bench_function("spearman_175", |b| b.iter(|| stats::spearman(&x, &y).unwrap()));
    g.bench_function("kendall_175", |b| b.iter(|| stats::kendall(&x, &y).unwrap()));
    g.bench_function("correlate_30_desk_settings", |b| {
        let (x, y) = random_pair(30, 6);
        b.iter(|| stats::correlate(&x, &y, &CorrelationSettings::default()).unwrap())
    });
    let pool = generate_pool(&PoolConfig::default(), 784, 10).unwrap();
    let params = CalibrationParams::manual(0.214, -0.486, 2.0, 0.5);
    g.bench_function("ads_full_pool", |b| b.iter(|| pool.iter().map(|e| compute_ads(&e.spec(), &params).unwrap().value).sum::<f64>()));
    g.finish();
}

criterion_group!(benches, statistics);
criterion_main!(benches);
