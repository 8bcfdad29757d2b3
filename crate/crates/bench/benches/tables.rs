use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deconv_erm::noisy_risk::DeconvolutionSmoother;
use deconv_erm::noisy_risk::SvdSmoother;
use deconv_erm::operators::rng_from_seed;
use deconv_erm::{
    build_base_kernel, build_deconvolution_kernel, minimize, BaseKernelKind, Grid, HypothesisClass,
    LossSpec, NoiseModel, NoisySample, Smoother, SpectralOperator,
};
use rand::Rng;

const FLAT: BaseKernelKind = BaseKernelKind::OrderMFlatTop;

fn kernel_build(c: &mut Criterion) {
    let noise = NoiseModel::laplace(&[2.0]).unwrap();
    let mut group = c.benchmark_group("deconvolution_kernel");
    for points in [256, 1024, 4096] {
        let grid = Grid::unit(points).unwrap();
        let base = build_base_kernel(FLAT, &grid).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(points), &base, |b, base| {
            b.iter(|| build_deconvolution_kernel(base, &noise, &[black_box(0.1)]).unwrap())
        });
    }
    group.finish();
}

fn table_build(c: &mut Criterion) {
    let grid = Grid::unit(1024).unwrap();
    let class = HypothesisClass::thresholds(0.0, 1.0, 101).unwrap();
    let noise = NoiseModel::laplace(&[2.0]).unwrap();
    let deconv =
        Smoother::Deconvolution(DeconvolutionSmoother::new(FLAT, &noise, 0.1, &grid).unwrap());
    let svd = Smoother::Svd(
        SvdSmoother::new(SpectralOperator::new(1.0, 64).unwrap(), 16, &grid).unwrap(),
    );
    let mut group = c.benchmark_group("loss_tables_101");
    group.sample_size(10);
    group.bench_function("deconvolution", |b| {
        b.iter(|| deconv.tables(&class, &LossSpec::HARD, None).unwrap())
    });
    group.bench_function("svd", |b| {
        b.iter(|| svd.tables(&class, &LossSpec::HARD, None).unwrap())
    });
    group.finish();
}

fn erm(c: &mut Criterion) {
    let grid = Grid::unit(1024).unwrap();
    let class = HypothesisClass::thresholds(0.0, 1.0, 101).unwrap();
    let noise = NoiseModel::laplace(&[2.0]).unwrap();
    let smoother =
        Smoother::Deconvolution(DeconvolutionSmoother::new(FLAT, &noise, 0.1, &grid).unwrap());
    let tables = smoother.tables(&class, &LossSpec::HARD, None).unwrap();
    let mut group = c.benchmark_group("minimize_101");
    for n in [1_000, 10_000, 100_000] {
        let mut rng = rng_from_seed(n as u64);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|&v| usize::from(rng.random::<f64>() < v))
            .collect();
        let z: Vec<f64> = x.iter().map(|v| v + noise.sample(&mut rng)[0]).collect();
        let sample = NoisySample::new(z, y, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("precomputed", n), &sample, |b, s| {
            b.iter(|| deconv_erm::erm::minimize_tables(&tables, s).unwrap())
        });
        if n == 10_000 {
            group.bench_with_input(BenchmarkId::new("with_tables", n), &sample, |b, s| {
                b.iter(|| minimize(&class, s, &smoother, &LossSpec::HARD, None).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, kernel_build, table_build, erm);
criterion_main!(benches);
