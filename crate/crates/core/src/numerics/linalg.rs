use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_CLAMP: f64 = 1e-12;

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetry within `1e-10` relative to the largest absolute entry.
pub fn is_symmetric(m: &Matrix) -> bool {
    m.is_square() && asymmetry(m) <= SYMMETRY_TOL * m.amax().max(1.0)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// A symmetric positive definite matrix. Construction symmetrizes the input
/// and verifies definiteness with a Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SPD matrix"));
        }
        if !is_symmetric(&m) {
            return Err(Error::NotSymmetric { asymmetry: asymmetry(&m) });
        }
        let m = symmetrize(&m);
        if m.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                condition: condition_estimate(&m),
            });
        }
        Ok(SpdMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(Matrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        Self::new(Matrix::identity(n, n) * c)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        let chol = self.0.clone().cholesky().ok_or(Error::NotPositiveDefinite {
            condition: condition_estimate(&self.0),
        })?;
        SpdMatrix::new(symmetrize(&chol.inverse()))
    }

    pub fn log_det(&self) -> f64 {
        // Construction guarantees the factorization exists.
        let chol = self.0.clone().cholesky().expect("SPD invariant");
        2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

impl AsRef<Matrix> for SpdMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

fn condition_estimate(m: &Matrix) -> f64 {
    let vals = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.
#[derive(Debug, Clone)]
pub struct EigenFactorization {
    pub vectors: Matrix,
    pub values: Vec<f64>,
}

impl EigenFactorization {
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (j, v) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*v);
        }
        &scaled * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing.
///
/// Negative eigenvalues within `1e-12 * max|λ|` of zero are clamped to zero so
/// rank-deficient Gram matrices come back PSD. Each eigenvector is oriented so
/// its first non-negligible entry is positive.
pub fn sym_eigen(m: &Matrix) -> Result<EigenFactorization> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigendecomposition of {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    if !is_symmetric(m) {
        return Err(Error::NotSymmetric { asymmetry: asymmetry(m) });
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the input order among ties, so diagonal inputs map to permuted identities.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let largest = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvalues[src];
        if v < 0.0 && v > -PSD_CLAMP * largest {
            v = 0.0;
        }
        values.push(v);
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(lead) = col.iter().find(|x| x.abs() > 1e-12) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenFactorization { vectors, values })
}

/// Symmetric square root `V diag(sqrt(λ)) Vᵀ` of an SPD matrix.
pub fn sym_sqrt(m: &SpdMatrix) -> Result<Matrix> {
    let eig = sym_eigen(m.as_matrix())?;
    let mut scaled = eig.vectors.clone();
    for (j, v) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    Ok(&scaled * eig.vectors.transpose())
}

/// Solves `a x = b` by Cholesky factorization.
pub fn spd_solve(a: &SpdMatrix, b: &Matrix) -> Result<Matrix> {
    if a.dim() != b.nrows() {
        return Err(Error::Dimension(format!(
            "solve with {}x{} system and {} right-hand rows",
            a.dim(),
            a.dim(),
            b.nrows()
        )));
    }
    let chol = a.as_matrix().clone().cholesky().ok_or(Error::NotPositiveDefinite {
        condition: condition_estimate(a.as_matrix()),
    })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            condition: condition_estimate(a.as_matrix()),
        });
    }
    Ok(x)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(m: &Matrix) -> Matrix {
    // nalgebra stores matrices column-major, which is exactly the stacking order.
    Matrix::from_column_slice(m.len(), 1, m.as_slice())
}

pub fn unvec(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot unvec length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let a = Matrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        &a * a.transpose() + Matrix::identity(n, n) * 0.1
    }

    #[test]
    fn eigen_identity_is_canonical() {
        let e = sym_eigen(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!(max_abs_diff(&e.vectors, &Matrix::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn eigen_diagonal_sorted() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let e = sym_eigen(&m).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        let perm = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(max_abs_diff(&e.vectors, &perm) < 1e-15);
    }

    #[test]
    fn eigen_two_by_two_closed_form() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = Matrix::from_row_slice(2, 2, &[h, h, h, -h]);
        assert!(max_abs_diff(&e.vectors, &expected) < 1e-12);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eigen_clamps_rank_deficient_gram() {
        let z = Matrix::from_fn(6, 2, |i, j| (i as f64 + 1.0) * (j as f64 + 0.5) + (i * j) as f64);
        let e = sym_eigen(&(&z * z.transpose())).unwrap();
        assert!(e.values.iter().all(|v| *v >= 0.0));
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_large_reconstruction() {
        let m = random_spd(120, 3);
        let e = sym_eigen(&m).unwrap();
        let err = (e.reconstruct() - &m).norm() / m.norm();
        assert!(err < 1e-8);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!(max_abs_diff(&gram, &Matrix::identity(120, 120)) < 1e-10);
    }

    #[test]
    fn solve_identity_and_scalar() {
        let b = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let x = spd_solve(&SpdMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
        let ones = Matrix::from_element(3, 1, 1.0);
        let x = spd_solve(&SpdMatrix::scaled_identity(3, 2.0).unwrap(), &ones).unwrap();
        assert!(max_abs_diff(&x, &Matrix::from_element(3, 1, 0.5)) < 1e-15);
    }

    #[test]
    fn solve_random_residual() {
        let a = SpdMatrix::new(random_spd(5, 11)).unwrap();
        let b = Matrix::from_fn(5, 3, |i, j| (i as f64 - j as f64).sin());
        let x = spd_solve(&a, &b).unwrap();
        assert!((a.as_matrix() * x - &b).norm() / b.norm() <= 1e-8);
    }

    #[test]
    fn spd_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SpdMatrix::new(m) {
            Err(Error::NotPositiveDefinite { condition }) => assert!((condition - 3.0).abs() < 1e-9),
            other => panic!("expected indefinite error, got {other:?}"),
        }
    }

    #[test]
    fn kron_examples() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&Matrix::identity(2, 2), &m);
        assert_eq!(k.view((0, 0), (2, 2)).into_owned(), m);
        assert_eq!(k.view((2, 2), (2, 2)).into_owned(), m);
        assert_eq!(k.view((0, 2), (2, 2)).into_owned(), Matrix::zeros(2, 2));
        assert_eq!(kron(&Matrix::from_element(1, 1, 2.0), &m), &m * 2.0);
        let e11 = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let k = kron(&e11, &Matrix::identity(2, 2));
        let mut expected = Matrix::zeros(4, 4);
        expected[(0, 0)] = 1.0;
        expected[(1, 1)] = 1.0;
        assert_eq!(k, expected);
    }

    #[test]
    fn vec_examples() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let v = vec(&m);
        assert_eq!(v.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&v, 2, 2).unwrap(), m);
        let col = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(vec(&col), col);
        assert!(unvec(&v, 3, 2).is_err());
    }

    fn mat(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
    }

    fn rel(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    proptest! {
        #[test]
        fn kron_mixed_product(a in mat(2, 3), b in mat(3, 2), c in mat(3, 2), d in mat(2, 4)) {
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(rel(&lhs, &rhs) <= 1e-10);
        }

        #[test]
        fn vec_of_product(a in mat(3, 2), x in mat(2, 4), b in mat(5, 4)) {
            let lhs = vec(&(&a * &x * b.transpose()));
            let rhs = kron(&b, &a) * vec(&x);
            prop_assert!(rel(&lhs, &rhs) <= 1e-10);
        }

        #[test]
        fn eigen_reconstructs_spd(seed in 0u64..10_000, n in 1usize..30) {
            let m = random_spd(n, seed);
            let e = sym_eigen(&m).unwrap();
            prop_assert!((e.reconstruct() - &m).norm() / m.norm() <= 1e-8);
            let gram = e.vectors.transpose() * &e.vectors;
            prop_assert!(max_abs_diff(&gram, &Matrix::identity(n, n)) <= 1e-10);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
