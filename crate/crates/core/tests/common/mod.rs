#![allow(dead_code)]

pub mod oracles;

use l0qsvm::{FeatureCache, SymIndexMap};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = matrix(rng, n, n);
    let s = &a + a.transpose();
    // exact symmetry: copy the lower triangle up
    DMatrix::from_fn(n, n, |i, j| if i >= j { s[(i, j)] } else { s[(j, i)] })
}

/// Labels with both classes present.
pub fn labels(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..m)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    if m >= 2 {
        y[0] = 1.0;
        y[1] = -1.0;
    }
    y
}

/// Random points labeled by a random quadratic surface.
pub fn surface_problem(seed: u64, m: usize, n: usize) -> FeatureCache {
    let mut rng = rng(seed);
    let x = matrix(&mut rng, m, n);
    let w = symmetric(&mut rng, n);
    let b = vector(&mut rng, n);
    let mut y: Vec<f64> = (0..m)
        .map(|i| {
            let xi = x.row(i).transpose();
            let f = 0.5 * xi.dot(&(&w * &xi)) + b.dot(&xi) + rng.random_range(-0.5..0.5);
            if f >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    FeatureCache::new(&x, &y).unwrap()
}

/// Random points with random labels (generally not separable).
pub fn noisy_problem(seed: u64, m: usize, n: usize) -> FeatureCache {
    let mut rng = rng(seed);
    let x = matrix(&mut rng, m, n);
    let y = labels(&mut rng, m);
    FeatureCache::new(&x, &y).unwrap()
}

pub fn packed(map: &SymIndexMap, w: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    map.pack(w, b).unwrap().into_inner()
}
