use criterion::{black_box, criterion_group, criterion_main, Criterion};
use levykit::montecarlo::{estimate_localtime_tail, sample_tau_batch, simulate_path};
use levykit::penalization::{martingale_mean_mc, WeightFunction};
use levykit::spectral::{eigen_coefficients, eigen_value, EigenKind, SpectralModel};
use levykit::subexp::{subexp_ratio, TailDistribution};
use levykit::{bessel_spec, brownian};

fn spectral(c: &mut Criterion) {
    let m = SpectralModel::preset(&bessel_spec(1.5).unwrap()).unwrap();
    c.bench_function("transition_density bessel 1.5", |b| {
        b.iter(|| m.transition_density(black_box(0.5), 1.0, 1.0, false).unwrap())
    });
    c.bench_function("levy_tail bessel 1.5 t=1e3", |b| b.iter(|| m.levy_tail(black_box(1e3)).unwrap()));
    c.bench_function("hitting_tail bessel 1.5", |b| b.iter(|| m.hitting_tail(1.0, black_box(10.0)).unwrap()));
    let spec = brownian();
    c.bench_function("eigen series 60 terms", |b| {
        b.iter(|| {
            let s = eigen_coefficients(&spec, black_box(1.0), EigenKind::C, 60).unwrap();
            eigen_value(&s, 5.0, 1e-9).unwrap()
        })
    });
}

fn subexp(c: &mut Criterion) {
    let p = TailDistribution::pareto(0.5).unwrap();
    c.bench_function("subexp_ratio pareto x=1e4", |b| b.iter(|| subexp_ratio(&p, black_box(1e4)).unwrap()));
}

fn montecarlo(c: &mut Criterion) {
    let spec = bessel_spec(1.5).unwrap();
    let mut g = c.benchmark_group("montecarlo");
    g.sample_size(10);
    g.bench_function("tau 10k", |b| b.iter(|| sample_tau_batch(&spec, 1.0, 10_000, black_box(1)).unwrap()));
    g.bench_function("localtime tail 10k", |b| {
        b.iter(|| estimate_localtime_tail(&spec, 1.0, 1.0, 1e4, 10_000, black_box(1)).unwrap())
    });
    g.bench_function("path 1e4 steps", |b| b.iter(|| simulate_path(&spec, 0.0, 1.0, 1e-4, black_box(1)).unwrap()));
    let h = WeightFunction::triangular(2.0).unwrap();
    g.bench_function("martingale mean 10k", |b| {
        b.iter(|| martingale_mean_mc(&spec, &h, 1.0, 10_000, black_box(1)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, spectral, subexp, montecarlo);
criterion_main!(benches);
