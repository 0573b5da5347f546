//! Compares the rayon-backed scan path against the sequential fallback on
//! the three scan workloads that dominate real runs: functional curves,
//! potential-grid scans, and regular-set sampling.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dicke_dft::functionals::{lieb_functional, DensityPair};
use dicke_dft::geometry;
use dicke_dft::model::hamiltonian;
use dicke_dft::par::{parallel_map, serial_map};
use dicke_dft::spectral;
use dicke_dft::{ModelParams, Potentials};

fn bench_curve_scan(c: &mut Criterion) {
    let params = ModelParams::rabi(1.0, 1.0).unwrap();
    let sigmas: Vec<f64> = (0..16).map(|i| -0.9 + 1.8 * i as f64 / 15.0).collect();
    let eval = |s: &f64| {
        let target = DensityPair::from_slices(&[*s], &[0.0]).unwrap();
        lieb_functional(&params, &target, 1e-7).unwrap().value
    };
    let mut group = c.benchmark_group("curve_scan");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(parallel_map(&sigmas, eval)))
    });
    group.bench_function("serial", |b| {
        b.iter(|| black_box(serial_map(&sigmas, eval)))
    });
    group.finish();
}

fn bench_potential_grid(c: &mut Criterion) {
    let params = ModelParams::rabi(1.0, 1.0).unwrap();
    let basis = spectral::basis_at(&params, 24).unwrap();
    let grid: Vec<Potentials> = (0..25)
        .map(|i| {
            Potentials::new(
                vec![-0.8 + 1.6 * (i / 5) as f64 / 4.0],
                vec![-0.8 + 1.6 * (i % 5) as f64 / 4.0],
            )
            .unwrap()
        })
        .collect();
    let eval = |pots: &Potentials| {
        let h = hamiltonian(&params, pots, &basis);
        spectral::eigensolve(&h, 2).unwrap().ground_energy()
    };
    let mut group = c.benchmark_group("potential_grid");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(parallel_map(&grid, eval)))
    });
    group.bench_function("serial", |b| {
        b.iter(|| black_box(serial_map(&grid, eval)))
    });
    group.finish();
}

fn bench_component_sampling(c: &mut Criterion) {
    // count_components is internally chunk-parallel; the serial baseline
    // classifies the same sample budget in one stream
    let planes = geometry::irregular_hyperplanes(3).unwrap();
    let mut group = c.benchmark_group("component_sampling");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(geometry::count_components(3, 200_000, 1).unwrap()))
    });
    group.bench_function("serial", |b| {
        use rand::Rng;
        use rand::SeedableRng;
        b.iter(|| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            let mut seen: Vec<Vec<i8>> = Vec::new();
            for _ in 0..200_000 {
                let sigma: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                if let Some(sv) = geometry::sign_vector(&planes, &sigma, 1e-9) {
                    if !seen.contains(&sv) {
                        seen.push(sv);
                    }
                }
            }
            black_box(seen.len())
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_curve_scan,
    bench_potential_grid,
    bench_component_sampling
);
criterion_main!(benches);
