use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssl_bench::{fixtures, solver};
use ssl_core::optimize::{self, FunctionalSpec, Schedule};
use ssl_core::surgery::{self, ScanConfig, ScanMode, TheoryConstants};
use ssl_core::{spectral, DirichletOperator, SolverConfig};
use std::hint::black_box;

fn cold_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("lowest_eigenpairs");
    g.sample_size(10);
    for cells in [1000, 4000] {
        for (name, d) in fixtures(cells) {
            let op = DirichletOperator::assemble(&d).unwrap();
            g.bench_with_input(BenchmarkId::new(name, d.len()), &op, |b, op| {
                b.iter(|| spectral::lowest_eigenpairs(black_box(op), 3, &solver()).unwrap())
            });
        }
    }
    g.finish();
}

fn warm_solve(c: &mut Criterion) {
    let (_, d) = fixtures(3000).remove(0);
    let cfg = SolverConfig {
        tol: 1e-6,
        ..SolverConfig::default()
    };
    let s = spectral::spectrum_of(&d, 2, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let moved = optimize::apply_move(&d, optimize::propose_move(&d, &mut rng).unwrap()).unwrap();
    let op = DirichletOperator::assemble(&moved).unwrap();
    let warm: Vec<Vec<f64>> = {
        let rows: std::collections::HashMap<_, _> = d.cells().enumerate().map(|(i, c)| (c, i)).collect();
        s.eigenfunctions
            .iter()
            .map(|u| moved.cells().map(|c| rows.get(&c).map_or(0.0, |&r| u[r])).collect())
            .collect()
    };
    let mut g = c.benchmark_group("after_two_cell_move");
    g.bench_function("warm", |b| b.iter(|| spectral::solve(&op, 2, black_box(&warm), &cfg).unwrap()));
    g.bench_function("cold", |b| b.iter(|| spectral::solve(&op, 2, &[], &cfg).unwrap()));
    g.finish();
}

fn section_scan(c: &mut Criterion) {
    let (_, d) = fixtures(3000).remove(2);
    let s = spectral::spectrum_of(&d, 3, &solver()).unwrap();
    let tc = TheoryConstants::new(2, 1.05 * spectral::normalized_eigenvalues(&s, &d)[2]).unwrap();
    let mut g = c.benchmark_group("surgery");
    g.sample_size(10);
    g.bench_function("tail_scan_filament", |b| {
        b.iter(|| surgery::scan(&d, &s, 0, ScanMode::Tail, &tc, &ScanConfig::default()).unwrap())
    });
    g.finish();
}

fn annealing(c: &mut Criterion) {
    let start = ssl_core::shapes::rectangle(&[60, 15]);
    let schedule = Schedule {
        iterations: 50,
        ..Schedule::default()
    };
    let cfg = SolverConfig {
        tol: 1e-6,
        ..SolverConfig::default()
    };
    let mut g = c.benchmark_group("optimize");
    g.sample_size(10);
    g.bench_function("lambda_1_50_iterations", |b| {
        b.iter(|| optimize::run(&FunctionalSpec::Single(1), &start, &schedule, 1, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, cold_solve, warm_solve, section_scan, annealing);
criterion_main!(benches);
