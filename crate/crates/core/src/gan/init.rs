//! Seeded uniform initialization keyed by row.
//!
//! Every row of a parameter matrix draws from its own stream, derived from
//! (seed, parameter name, row key). Input-layer rows are keyed by feature
//! name, so adding or removing a feature leaves every other weight as it was.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;

pub(crate) fn row_rng(seed: u64, param: &str, row_key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((param.len() as u64).to_le_bytes());
    h.update(param.as_bytes());
    h.update(row_key.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// `rows.len() x cols` matrix with entries uniform in `(−scale, scale)`.
pub(crate) fn init_matrix(seed: u64, param: &str, rows: &[String], cols: usize, scale: f64) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * cols);
    for key in rows {
        let mut rng = row_rng(seed, param, key);
        data.extend((0..cols).map(|_| rng.random_range(-scale..scale)));
    }
    Tensor::new(rows.len(), cols, data).expect("shape")
}

pub(crate) fn index_keys(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
