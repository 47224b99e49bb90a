use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pbsim_core::quadratic::{
    dominant_magnitude, log_grid, momentum_grid, optimal_halflife, stability_heatmap, QuadMethod, QuadMethodSpec,
    SearchSpec,
};

fn roots(c: &mut Criterion) {
    let mut group = c.benchmark_group("dominant_root");
    for delay in [1usize, 5, 10, 32] {
        let poly = QuadMethodSpec::defaults(QuadMethod::LwpWPlusGsc)
            .recurrence(0.9, 0.05, delay)
            .char_poly();
        group.bench_with_input(BenchmarkId::from_parameter(delay), &poly, |b, p| {
            b.iter(|| dominant_magnitude(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn heatmap(c: &mut Criterion) {
    let spec = QuadMethodSpec::defaults(QuadMethod::Gsc);
    let ms = momentum_grid(1e-3, 40);
    let els = log_grid(1e-3, 10.0, 40);
    c.bench_function("heatmap_40x40_d5", |b| {
        b.iter(|| stability_heatmap(&spec, black_box(5), &ms, &els).unwrap())
    });
}

fn halflife(c: &mut Criterion) {
    let search = SearchSpec {
        m_grid: momentum_grid(1e-4, 20),
        ..SearchSpec::default()
    };
    let mut group = c.benchmark_group("optimal_halflife");
    group.sample_size(10);
    for method in [QuadMethod::Gdm, QuadMethod::LwpWPlusGsc] {
        group.bench_function(method.name(), |b| {
            b.iter(|| optimal_halflife(&QuadMethodSpec::defaults(method), black_box(1e3), 5, &search).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, roots, heatmap, halflife);
criterion_main!(benches);
