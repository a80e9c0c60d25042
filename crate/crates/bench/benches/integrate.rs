use criterion::{criterion_group, criterion_main, Criterion};
use nestcert::toy::ToyModel;
use nestcert::{integrate, Method, Tolerances, ToyParams};
use nestcert_bench::displaced_lab_loop;

fn toy(c: &mut Criterion) {
    let model = ToyModel::new(ToyParams::new(100.0, 1.0).unwrap());
    let x0 = [3.0, -2.0, 4.0, -1.0];
    let mut group = c.benchmark_group("toy_to_t10");
    for method in [Method::DormandPrince, Method::Rosenbrock] {
        let tol = Tolerances::default().with_method(method);
        group.bench_function(format!("{method:?}"), |b| b.iter(|| integrate(&model, &x0, (0.0, 10.0), &tol).unwrap()));
    }
    group.finish();
}

fn converters(c: &mut Criterion) {
    let (model, x0) = displaced_lab_loop(3);
    let tol = Tolerances { abs: 1e-6, rel: 1e-6, ..Tolerances::default() }.with_method(Method::Rosenbrock);
    let mut group = c.benchmark_group("three_converters");
    group.sample_size(10);
    group.bench_function("rosenbrock_50ms", |b| b.iter(|| integrate(&model, &x0, (0.0, 0.05), &tol).unwrap()));
    group.finish();
}

criterion_group!(benches, toy, converters);
criterion_main!(benches);
