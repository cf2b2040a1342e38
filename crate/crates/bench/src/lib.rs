//! Bench-only crate; see `benches/graph.rs`. Run with `cargo bench -p
//! sgval-bench`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sgval_core::Matrix;

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = StdRng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}
