//! Dense linear algebra and random sampling shared by every estimator.

mod linalg;
mod rng;

pub use linalg::{
    is_symmetric, kron, max_abs_diff, spd_solve, sym_eigen, sym_sqrt, symmetrize, unvec, vec, EigenFactorization,
    Matrix, SpdMatrix,
};
pub use rng::{sample_matrix_normal, RowCov, SimRng};
