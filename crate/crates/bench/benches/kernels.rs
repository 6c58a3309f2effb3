use criterion::{black_box, criterion_group, criterion_main, Criterion};
use oscchain::dynamics::lr_experiment;
use oscchain::kernel::{eigensum_kernel, mehler_kernel, trotter_kernel};
use oscchain::kms::KmsFunction;
use oscchain::linalg::{eigh, random_hermitian};
use oscchain::{GridSpec, HermiteBasis, LabeledOperator, PotentialSpec, C64};
use oscchain_bench::{chain, position, thermal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernels(c: &mut Criterion) {
    let grid = GridSpec::new(-6.0, 6.0, 256).unwrap();
    c.bench_function("mehler_kernel_256", |b| b.iter(|| mehler_kernel(black_box(1.0), 1.0, &grid).unwrap()));
    let basis = HermiteBasis::new(60, 1.0).unwrap();
    c.bench_function("eigensum_kernel_60x256", |b| b.iter(|| eigensum_kernel(&basis, black_box(1.0), &grid).unwrap()));
    let v = PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap();
    let coarse = GridSpec::new(-8.0, 8.0, 128).unwrap();
    c.bench_function("trotter_kernel_m16_128", |b| b.iter(|| trotter_kernel(&v, 1.0, black_box(1.0), 16, &coarse).unwrap()));
}

fn linear_algebra(c: &mut Criterion) {
    let a = random_hermitian(256, &mut ChaCha8Rng::seed_from_u64(1));
    c.bench_function("eigh_complex_256", |b| b.iter(|| eigh(black_box(&a)).unwrap()));
}

fn dynamics(c: &mut Criterion) {
    let t = thermal(16, 0.5);
    let q = position(&t, 0);
    let r = position(&t, 1);
    c.bench_function("heisenberg_256", |b| b.iter(|| t.plan.heisenberg(black_box(0.7), &r).unwrap()));
    let f = KmsFunction::new(&t.state, &q, &r).unwrap();
    c.bench_function("kms_eval_256", |b| b.iter(|| f.eval(black_box(C64::new(0.3, 0.2))).unwrap()));

    let ch = chain(2, 3, 0.5);
    let terms = ch.local_terms().unwrap();
    let op = |s| LabeledOperator::new(vec![s], 3, terms.position.clone()).unwrap();
    let (q, r) = (op(0), op(2));
    let mut group = c.benchmark_group("lr");
    group.sample_size(10);
    group.bench_function("lr_experiment_dim81_5pts", |b| {
        b.iter(|| lr_experiment(&ch, &q, &r, black_box(&[0.0, 0.25, 0.5, 0.75, 1.0])).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernels, linear_algebra, dynamics);
criterion_main!(benches);
