//! Inputs shared by the benchmarks.

use rand::Rng;
use sea_core::features::FeatureVec;
use sea_core::grid::{Cell, Grid};
use sea_core::matrix::Matrix;
use sea_core::rng::seeded;

/// Open `n`×`n` speed grid with a comb of walls, each leaving a gap at
/// alternating ends.
pub fn comb(n: usize) -> Grid<f64> {
    let mut g = Grid::filled(n, n, 1.0);
    let mut top = true;
    for x in (n / 6..n).step_by(n / 6) {
        for y in 0..n - n / 8 {
            let y = if top { y } else { n - 1 - y };
            g.set(Cell::new(x as i64, y as i64), 0.0);
        }
        top = !top;
    }
    g
}

/// Symmetric reachability matrix with zero diagonal and roughly `density`
/// of the pairs connected.
pub fn random_gamma(n: usize, density: f64, seed: u64) -> Matrix<f64> {
    let mut rng = seeded(seed);
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let v = rng.random_range(0.05..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

pub fn unit_features(n: usize, dim: usize, seed: u64) -> Vec<FeatureVec> {
    let mut rng = seeded(seed);
    (0..n).map(|_| FeatureVec::random_unit(dim, &mut rng)).collect()
}
