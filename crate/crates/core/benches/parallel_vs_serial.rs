//! Data-parallel hot loops under criterion. Run `cargo bench` for the
//! rayon build and `cargo bench --no-default-features` for the sequential
//! fallback; bench names match, so criterion's saved baselines give the
//! side-by-side comparison.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use qfkernels::encoding::{fit_generator, generate, LatentSpec};
use qfkernels::kernel::{gram, median_pairwise_distance, KernelSpec, PointSet};
use qfkernels::pricing::{
    gbm_scenarios, stress_extrapolate, BasketOption, StressScenarioSet,
};
use qfkernels::timeseries::{generate_paths, AnchorMode, GarchParams, NoiseMap, TimeSeriesMatrix};

fn random_points(n: usize, d: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))).unwrap()
}

fn bench_gram(c: &mut Criterion) {
    let x = random_points(600, 4, 1);
    let spec = KernelSpec::gaussian(median_pairwise_distance(&x));
    c.bench_function("gram_600x600", |b| {
        b.iter(|| gram(black_box(&spec), &x, &x).unwrap())
    });
}

fn bench_pricer_sweep(c: &mut Criterion) {
    let option = BasketOption::new(vec![1.0 / 3.0; 3], 100.0, 1.0, 0.2, 0.0).unwrap();
    let spots = [100.0, 100.0, 100.0];
    let vols = [0.2, 0.25, 0.15];
    let train = StressScenarioSet::new(
        gbm_scenarios(&spots, &vols, 0.0, 10, 150, 11).unwrap(),
        10,
        0.0,
    )
    .unwrap();
    let test = StressScenarioSet::new(
        gbm_scenarios(&spots, &vols, 0.0, 10, 100, 12).unwrap(),
        10,
        0.0,
    )
    .unwrap();
    let spec = KernelSpec::gaussian(1.0).with_regularization(0.0);
    c.bench_function("stress_extrapolate_150x100", |b| {
        b.iter(|| {
            stress_extrapolate(&spec, black_box(&train), |t, x| option.bs_price(t, x), &test)
                .unwrap()
        })
    });
}

fn bench_path_generation(c: &mut Criterion) {
    let params = GarchParams::new(0.0, 0.05, vec![0.1], vec![0.85]).unwrap();
    let map = NoiseMap::Garch(vec![params.clone(), params]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hist = TimeSeriesMatrix::from_values(DMatrix::from_fn(2, 250, |_, _| {
        100.0 * (1.0 + rng.random_range(-0.01..0.01))
    }))
    .unwrap();
    let eps = map.forward(&hist).unwrap();
    let noise = PointSet::new(eps.values.transpose()).unwrap();
    let spec = KernelSpec::new(
        qfkernels::kernel::KernelFamily::Matern32,
        median_pairwise_distance(&noise),
        1e-6,
    )
    .unwrap();
    let latent = LatentSpec::uniform(2, 7);
    c.bench_function("generate_paths_20x100", |b| {
        b.iter(|| {
            generate_paths(&map, black_box(&hist), &spec, &latent, 20, 100, AnchorMode::Continuation)
                .unwrap()
        })
    });
}

fn bench_generator_sampling(c: &mut Criterion) {
    let data = random_points(500, 3, 5);
    let spec = KernelSpec::gaussian(1.0).with_regularization(1e-6);
    let latent = LatentSpec::uniform(3, 9);
    let generator = fit_generator(&spec, data.matrix(), &latent).unwrap();
    c.bench_function("generate_2000_draws", |b| {
        b.iter(|| generate(black_box(&generator), &latent, 2000).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_gram, bench_pricer_sweep, bench_path_generation, bench_generator_sampling
}
criterion_main!(benches);
