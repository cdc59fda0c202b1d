use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{sym_sqrt, Matrix, SpdMatrix};
use crate::error::{Error, Result};

/// Seeded counter-based generator. Independent streams are addressed by
/// `(seed, stream)`, so replications never share generator state.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self::for_stream(seed, 0)
    }

    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SimRng { inner }
    }

    /// Stream addressed by a hierarchical key such as `[setting, replication, purpose]`.
    pub fn for_path(seed: u64, path: &[u64]) -> Self {
        let stream = path.iter().fold(0x5EED_u64, |acc, &k| splitmix(acc ^ splitmix(k)));
        Self::for_stream(seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `rows x cols` matrix of i.i.d. standard normals, drawn row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.standard_normal();
            }
        }
        m
    }
}

/// Row covariance of a matrix-normal draw.
#[derive(Debug, Clone)]
pub enum RowCov {
    Identity,
    Matrix(SpdMatrix),
}

/// Draws `A Z₀ Bᵀ ~ MVN(0, row_cov, col_cov)` with `A`, `B` symmetric square roots.
pub fn sample_matrix_normal(rng: &mut SimRng, n: usize, row_cov: &RowCov, col_cov: &SpdMatrix) -> Result<Matrix> {
    if let RowCov::Matrix(a) = row_cov {
        if a.dim() != n {
            return Err(Error::Dimension(format!("row covariance is {0}x{0} but n = {n}", a.dim())));
        }
    }
    let q = col_cov.dim();
    let z0 = rng.normal_matrix(n, q);
    let right = z0 * sym_sqrt(col_cov)?;
    Ok(match row_cov {
        RowCov::Identity => right,
        RowCov::Matrix(a) => sym_sqrt(a)? * right,
    })
}
