#![allow(dead_code)]

use neo_core::eigensolver::{smallest_eigenpairs_dense, Spectrum};
use neo_core::laplacian::{build_knn_laplacian, Bandwidth, DiagonalMass, KnnLaplacian, PointCloud};
use neo_core::numerics::{thin_qr, DenseMatrix};
use neo_core::shapes::random_sphere_points;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_orthogonal(m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    thin_qr(&gaussian(m, m, rng)).unwrap().q
}

/// `Q₁ diag(s) Q₂` with singular values in `[0.5, 2]`.
pub fn random_invertible(m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let s: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let (a, b) = (random_orthogonal(m, rng), random_orthogonal(m, rng));
    a.scale_cols(&s).matmul(&b)
}

pub fn random_mass(n: usize, rng: &mut ChaCha8Rng) -> DiagonalMass {
    DiagonalMass::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap()
}

pub fn sphere_knn(n: usize, seed: u64) -> KnnLaplacian {
    let cloud = PointCloud::uniform(random_sphere_points(n, seed)).unwrap();
    build_knn_laplacian(&cloud, 12, Bandwidth::Auto).unwrap()
}

/// k-NN sphere operator with its dense oracle spectrum.
pub fn sphere_oracle(n: usize, k: usize, seed: u64) -> (KnnLaplacian, Spectrum) {
    let lap = sphere_knn(n, seed);
    let s = smallest_eigenpairs_dense(&lap.stiffness, &lap.mass, k).unwrap();
    (lap, s)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
