use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use commeig_core::chart::{gamma_det_closed, gamma_matrix_2x2, kappa_numeric, numeric_gram_jacobian, ChartMap, UnipotentParam};
use commeig_core::density::{log_ginibre_density, log_rho_2x2};
use commeig_core::equilibrium::{discrete_energy, minimize_energy};
use commeig_core::mcmc::{gaussian_init, sample_chain};
use commeig_core::rng::seeded;
use commeig_core::tuple::{haar_unitary, multi_spectrum, reconstruct_tuple};
use commeig_core::{ChainConfig, EigenConfig, ExternalField, MatrixTuple};
use num_complex::Complex64;

fn densities(c: &mut Criterion) {
    let q = ExternalField::gaussian(0.5);
    let mut group = c.benchmark_group("log_ginibre_density");
    for n in [16, 64, 256] {
        let x = gaussian_init(n, 2, 1.0, &mut seeded(1));
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| b.iter(|| log_ginibre_density(black_box(x), &q)));
    }
    group.finish();
    let l1 = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.4), Complex64::new(0.0, 1.0)];
    let l2 = [Complex64::new(-0.5, 0.2), Complex64::new(0.1, 0.0), Complex64::new(0.7, -0.3)];
    c.bench_function("log_rho_2x2 d=3", |b| b.iter(|| log_rho_2x2(black_box(&l1), black_box(&l2), 3, 1.0)));
    c.bench_function("gamma_det_closed d=3", |b| b.iter(|| gamma_det_closed(3, black_box(&l1), &l2, Complex64::new(0.4, 0.2))));
    c.bench_function("det gamma_matrix_2x2 d=3", |b| b.iter(|| gamma_matrix_2x2(black_box(&l1), &l2, Complex64::new(0.4, 0.2)).determinant()));
}

fn spectra(c: &mut Criterion) {
    let mut rng = seeded(2);
    let lambda = gaussian_init(16, 3, 1.0, &mut rng);
    let x = reconstruct_tuple(&lambda, &haar_unitary(16, &mut rng)).unwrap();
    c.bench_function("multi_spectrum n=16 d=3", |b| b.iter(|| multi_spectrum(black_box(&x), 1e-8, &mut rng).unwrap()));
}

fn jacobians(c: &mut Criterion) {
    let lambda = EigenConfig::from_real_points(&[vec![0.3, -1.0], vec![1.4, 0.2], vec![-0.8, 0.9]]);
    let chart = ChartMap::hermitian(&lambda);
    c.bench_function("hermitian chart gram n=3 d=2", |b| b.iter(|| numeric_gram_jacobian(black_box(&chart), 1e-5).unwrap()));
    let complex = EigenConfig::from_complex_flat(2, 3, (0..6).map(|k| Complex64::new(k as f64 * 0.3, 1.0 - k as f64 * 0.2)).collect());
    let a = UnipotentParam::new(3, vec![Complex64::new(0.2, 0.1), Complex64::new(-0.3, 0.0), Complex64::new(0.1, 0.4)]).unwrap();
    let q = MatrixTuple::new(MatrixTuple::diagonal(&complex).components().iter().map(|m| a.matrix() * m * a.inverse()).collect()).unwrap();
    c.bench_function("kappa_numeric n=3 d=2", |b| b.iter(|| kappa_numeric(black_box(&q)).unwrap()));
}

fn samplers(c: &mut Criterion) {
    let q = ExternalField::gaussian(0.5);
    let init = gaussian_init(32, 1, 2.0, &mut seeded(3));
    let cfg = ChainConfig { seed: 4, length: 10_000, burn_in: 1_000, thin: 100, proposal_sigma: 0.1, adapt: true };
    let mut group = c.benchmark_group("samplers");
    group.sample_size(10);
    group.bench_function("metropolis n=32 10k steps", |b| b.iter(|| sample_chain(|x| log_ginibre_density(x, &q).log_value, &init, &cfg).unwrap()));
    let x = gaussian_init(200, 2, 1.0, &mut seeded(5));
    group.bench_function("discrete_energy n=200 d=2", |b| b.iter(|| discrete_energy(black_box(&x), &q).unwrap()));
    group.bench_function("minimize_energy n=50 d=2", |b| b.iter(|| minimize_energy(50, 2, &q, 6, 2_000, 1e-6).unwrap()));
    group.finish();
}

criterion_group!(benches, densities, spectra, jacobians, samplers);
criterion_main!(benches);
