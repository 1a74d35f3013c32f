use criterion::{criterion_group, criterion_main, Criterion};
use splinedeform::pipeline::{default_config_2d, run_pipeline};
use splinedeform::sample_domains;

fn bench_pipeline(c: &mut Criterion) {
    let shell = sample_domains::concave_shell_2d();
    c.bench_function("pipeline concave 2d", |b| {
        let config = default_config_2d(4);
        b.iter(|| run_pipeline(&shell, &config).unwrap())
    });
}

fn bench_assembly(c: &mut Criterion) {
    use splinedeform::elasticity::{assemble_tangent, DiscreteField, MaterialParams};
    let patch = sample_domains::identity_square(3, 12);
    let mat = MaterialParams::new(1.0, 0.45).unwrap();
    let field = DiscreteField::zero(patch.basis().clone(), 2);
    c.bench_function("tangent assembly 12x12 cubic", |b| {
        b.iter(|| assemble_tangent(&field, &patch, &mat, None).unwrap())
    });
}

criterion_group!(benches, bench_pipeline, bench_assembly);
criterion_main!(benches);
