use std::hint::black_box;

use awpinn::fdtd::YeeGrid;
use awpinn::loss::loss_and_gradient;
use awpinn::ntk::jacobi_eigen;
use awpinn::problems::PulseSource;
use awpinn::wavelet::eval_psi;
use awpinn::{LossMode, LossWeights};
use awpinn_bench::Fixture;
use criterion::{criterion_group, criterion_main, Criterion};

fn wavelet(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|i| -6.0 + 12.0 * i as f64 / 999.0).collect();
    for order in 0..=3u8 {
        c.bench_function(&format!("psi order {order} x1000"), |b| {
            b.iter(|| xs.iter().map(|&x| eval_psi(black_box(x), order).unwrap()).sum::<f64>())
        });
    }
}

fn loss(c: &mut Criterion) {
    let weights = LossWeights::default();
    for name in ["heat-0.12", "maxwell"] {
        let fx = Fixture::new(name, 500);
        c.bench_function(&format!("{name} fixed loss+grad"), |b| {
            b.iter(|| loss_and_gradient(&fx.problem, &fx.fixed, &fx.points, weights, LossMode::Weighted).unwrap())
        });
        c.bench_function(&format!("{name} adaptive loss+grad"), |b| {
            b.iter(|| loss_and_gradient(&fx.problem, &fx.adaptive, &fx.points, weights, LossMode::Weighted).unwrap())
        });
    }
}

fn eigen(c: &mut Criterion) {
    let n = 120;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (-((i as f64 - j as f64) / 10.0).powi(2)).exp();
        }
    }
    c.bench_function("jacobi eigen n=120", |b| b.iter(|| jacobi_eigen(black_box(&a), n).unwrap()));
}

fn fdtd(c: &mut Criterion) {
    let source = PulseSource::default();
    let f = |x: f64, y: f64, t: f64| source.eval(x, y, t);
    c.bench_function("yee step 200x200", |b| {
        let mut grid = YeeGrid::new(200, 200, 2.5e-3).unwrap();
        b.iter(|| grid.step(&f).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = wavelet, loss, eigen, fdtd
}
criterion_main!(benches);
