use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparse_shield_core::dct::{build_dct_basis, extract_dct};
use sparse_shield_core::linalg::{mgs_qr, mvm, Matrix, MvmPlan};
use sparse_shield_core::sparse::omp;
use sparse_shield_core::tensor::Tensor;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn bench_mvm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = random_matrix(&mut rng, 256, 256);
    let x: Vec<f32> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plan = MvmPlan::default();
    c.bench_function("mvm_256", |b| b.iter(|| mvm(&m, &x, &plan).unwrap()));
}

fn bench_omp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let atoms = {
        let mut m = random_matrix(&mut rng, 48, 200);
        for j in 0..m.cols() {
            let n = (m.col(j).iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt();
            for i in 0..m.rows() {
                let v = m.get(i, j) / n as f32;
                m.set(i, j, v);
            }
        }
        m
    };
    let x: Vec<f32> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("omp_48x200_l5", |b| b.iter(|| omp(&atoms, &x, 5).unwrap()));
}

fn bench_qr(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = random_matrix(&mut rng, 128, 32);
    c.bench_function("mgs_qr_128x32", |b| {
        b.iter_batched(|| m.clone(), |m| mgs_qr(&m).unwrap(), BatchSize::SmallInput)
    });
}

fn bench_dct(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let basis = build_dct_basis(4);
    let data: Vec<f32> = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
    let img = Tensor::new(vec![3, 32, 32], data).unwrap();
    c.bench_function("dct_extract_3x32x32_p4", |b| {
        b.iter(|| extract_dct(&img, &basis).unwrap())
    });
}

criterion_group!(benches, bench_mvm, bench_omp, bench_qr, bench_dct);
criterion_main!(benches);
