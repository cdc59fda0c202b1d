//! Equicorrelation structure, parameter set, datasets and the rotation into
//! the coordinate system where the coefficient prior is diagonal.
//!
//! With `C_ρ = U D_ρ Uᵀ` (U fixed for every ρ) and `Z Zᵀ = L diag(S) Lᵀ`, the
//! model `Y = Z Γ + E` becomes `Lᵀ Y U = (Lᵀ Z)(Γ U) + Lᵀ E U`, where the rotated
//! coefficients have column covariance `σ² D_ρ` and the rotated rows of
//! `Lᵀ Z` are mutually orthogonal.

use nalgebra::QR;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, symmetrize, Matrix, SpdMatrix};

/// Upper end of the admissible correlation range; keeps `C_ρ` numerically SPD.
pub const RHO_MAX: f64 = 1.0 - 1e-6;

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) || !rho.is_finite() {
        return Err(Error::param("rho", format!("must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

/// `C_ρ = (1 − ρ) I + ρ J` of dimension `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicorrStructure {
    pub q: usize,
    pub rho: f64,
}

impl EquicorrStructure {
    pub fn new(q: usize, rho: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::param("q", "must be at least 1"));
        }
        check_rho(rho)?;
        Ok(Self { q, rho })
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_fn(self.q, self.q, |i, j| if i == j { 1.0 } else { self.rho })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues_unchecked(self.q, self.rho)
    }

    pub fn determinant(&self) -> f64 {
        (1.0 + (self.q as f64 - 1.0) * self.rho) * (1.0 - self.rho).powi(self.q as i32 - 1)
    }

    /// Coefficients `(a, b)` with `C_ρ⁻¹ = a I + b J`.
    pub fn inverse_coefficients(&self) -> (f64, f64) {
        let rho = self.rho;
        let a = 1.0 / (1.0 - rho);
        let b = -rho / (1.0 - rho) / (1.0 + (self.q as f64 - 1.0) * rho);
        (a, b)
    }
}

fn eigenvalues_unchecked(q: usize, rho: f64) -> Vec<f64> {
    let mut d = vec![1.0 - rho; q];
    d[0] = 1.0 + (q as f64 - 1.0) * rho;
    d
}

/// `(1 + (q−1)ρ, 1 − ρ, …, 1 − ρ)`: eigenvalues of `C_ρ` in the order matching
/// [`equicorr_eigenbasis`].
pub fn equicorr_eigenvalues(q: usize, rho: f64) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::param("q", "must be at least 1"));
    }
    check_rho(rho)?;
    Ok(eigenvalues_unchecked(q, rho))
}

/// Orthogonal `U` diagonalizing every `C_ρ`: the normalized constant vector
/// followed by the Helmert contrasts.
pub fn equicorr_eigenbasis(q: usize) -> Result<Matrix> {
    if q == 0 {
        return Err(Error::param("q", "must be at least 1"));
    }
    let mut u = Matrix::zeros(q, q);
    let c0 = 1.0 / (q as f64).sqrt();
    u.column_mut(0).fill(c0);
    for k in 1..q {
        // k leading ones, then −k, normalized
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k)] = 1.0 / norm;
        }
        u[(k, k)] = -(k as f64) / norm;
    }
    Ok(u)
}

/// `Θ = {Ω, σ², ρ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub omega: SpdMatrix,
    pub sigma2: f64,
    pub rho: f64,
}

impl ParameterSet {
    pub fn new(omega: SpdMatrix, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::param("sigma2", format!("must be positive, got {sigma2}")));
        }
        if !(0.0..=RHO_MAX).contains(&rho) {
            return Err(Error::param("rho", format!("must lie in [0, {RHO_MAX}], got {rho}")));
        }
        Ok(Self { omega, sigma2, rho })
    }

    /// Starting point `Ω = I`, `σ² C_ρ = I`.
    pub fn initial(q: usize) -> Self {
        Self {
            omega: SpdMatrix::identity(q),
            sigma2: 1.0,
            rho: 0.0,
        }
    }

    pub fn q(&self) -> usize {
        self.omega.dim()
    }

    /// Diagonal of `Δ⁻¹ = σ² D_ρ` in the rotated basis.
    pub fn prior_variances(&self) -> Vec<f64> {
        eigenvalues_unchecked(self.q(), self.rho)
            .into_iter()
            .map(|d| self.sigma2 * d)
            .collect()
    }
}

/// Paired predictor and response matrices, optionally column-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub z: Matrix,
    pub y: Matrix,
    pub z_means: Vec<f64>,
    pub y_means: Vec<f64>,
    pub centered: bool,
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

fn subtract_means(m: &Matrix, means: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (j, mu) in means.iter().enumerate() {
        out.column_mut(j).add_scalar_mut(-mu);
    }
    out
}

impl Dataset {
    /// Raw, uncentered data.
    pub fn raw(z: Matrix, y: Matrix) -> Result<Self> {
        if z.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "Z has {} rows but Y has {}",
                z.nrows(),
                y.nrows()
            )));
        }
        if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let (p, q) = (z.ncols(), y.ncols());
        Ok(Self {
            z,
            y,
            z_means: vec![0.0; p],
            y_means: vec![0.0; q],
            centered: false,
        })
    }

    /// Column-centers both matrices, keeping the means for prediction.
    pub fn center_columns(z: Matrix, y: Matrix) -> Result<Self> {
        let raw = Self::raw(z, y)?;
        if raw.n() < 2 {
            return Err(Error::param("n", "centering needs at least two observations"));
        }
        let z_means = column_means(&raw.z);
        let y_means = column_means(&raw.y);
        Ok(Self {
            z: subtract_means(&raw.z, &z_means),
            y: subtract_means(&raw.y, &y_means),
            z_means,
            y_means,
            centered: true,
        })
    }

    /// Centered copy of this dataset; the stored means refer to the original scale.
    pub fn centered(&self) -> Result<Self> {
        if self.centered {
            return Ok(self.clone());
        }
        Self::center_columns(self.z.clone(), self.y.clone())
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Rows `idx` of the underlying (uncentered scale) data, as a raw dataset.
    pub fn subset_raw(&self, idx: &[usize]) -> Result<Self> {
        let z = Matrix::from_fn(idx.len(), self.p(), |i, j| self.z[(idx[i], j)] + self.z_means[j]);
        let y = Matrix::from_fn(idx.len(), self.q(), |i, j| self.y[(idx[i], j)] + self.y_means[j]);
        Self::raw(z, y)
    }

    /// Predictions on the original response scale for raw predictor rows.
    pub fn predict(&self, gamma: &Matrix, z_new: &Matrix) -> Result<Matrix> {
        if gamma.nrows() != self.p() || gamma.ncols() != self.q() || z_new.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "predict with {}x{} coefficients, {} predictors",
                gamma.nrows(),
                gamma.ncols(),
                z_new.ncols()
            )));
        }
        let mut out = subtract_means(z_new, &self.z_means) * gamma;
        for (j, mu) in self.y_means.iter().enumerate() {
            out.column_mut(j).add_scalar_mut(*mu);
        }
        Ok(out)
    }
}

/// Data expressed in the rotated coordinates.
#[derive(Debug, Clone)]
pub struct TransformedProblem {
    /// `Lᵀ Y U`
    pub y_t: Matrix,
    /// `Lᵀ Z`
    pub z_t: Matrix,
    pub u: Matrix,
    pub l: Matrix,
    /// Eigenvalues of `Z Zᵀ`, nonincreasing.
    pub s: Vec<f64>,
}

impl TransformedProblem {
    pub fn n(&self) -> usize {
        self.y_t.nrows()
    }

    pub fn p(&self) -> usize {
        self.z_t.ncols()
    }

    pub fn q(&self) -> usize {
        self.y_t.ncols()
    }
}

/// Eigendecomposition `Z Zᵀ = L diag(s) Lᵀ`.
///
/// For `n > p` the Gram matrix has rank at most `p`; a Householder QR of `Z`
/// supplies the full orthogonal factor, and only the `p x p` block `R Rᵀ` needs
/// an eigendecomposition.
pub fn gram_eigen(z: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let (n, p) = z.shape();
    if n <= p {
        let e = sym_eigen(&(z * z.transpose()))?;
        return Ok((e.vectors, e.values));
    }
    let qr = QR::new(z.clone());
    let r = qr.r();
    let inner = sym_eigen(&symmetrize(&(&r * r.transpose())))?;

    let mut qt = Matrix::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q_full = qt.transpose();

    let mut l = q_full.clone();
    let head = q_full.columns(0, p) * &inner.vectors;
    l.columns_mut(0, p).copy_from(&head);

    let mut s = inner.values;
    s.resize(n, 0.0);
    Ok((l, s))
}

/// Rotates centered data into the diagonal-prior coordinate system.
pub fn to_transformed(data: &Dataset) -> Result<TransformedProblem> {
    if !data.centered {
        return Err(Error::param("data", "must be column-centered before transforming"));
    }
    let u = equicorr_eigenbasis(data.q())?;
    let (l, s) = gram_eigen(&data.z)?;
    let lt = l.transpose();
    Ok(TransformedProblem {
        y_t: &lt * &data.y * &u,
        z_t: &lt * &data.z,
        u,
        l,
        s,
    })
}

/// `Γ = Γ̃ Uᵀ`.
pub fn back_transform_gamma(gamma_t: &Matrix, u: &Matrix) -> Result<Matrix> {
    if gamma_t.ncols() != u.nrows() {
        return Err(Error::Dimension(format!(
            "Γ̃ has {} columns but U is {}x{}",
            gamma_t.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(gamma_t * u.transpose())
}

/// `Ω = U Ω̃ Uᵀ`.
pub fn back_transform_precision(omega_t: &SpdMatrix, u: &Matrix) -> Result<SpdMatrix> {
    if omega_t.dim() != u.nrows() {
        return Err(Error::Dimension("precision and basis dimensions differ".into()));
    }
    SpdMatrix::new(symmetrize(&(u * omega_t.as_matrix() * u.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs_diff, SimRng};

    #[test]
    fn basis_degenerate_and_two_dim() {
        assert_eq!(equicorr_eigenbasis(1).unwrap(), Matrix::from_element(1, 1, 1.0));
        assert_eq!(equicorr_eigenvalues(1, 0.3).unwrap(), vec![1.0]);
        let u = equicorr_eigenbasis(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(max_abs_diff(&u, &Matrix::from_row_slice(2, 2, &[h, h, h, -h])) < 1e-15);
        let c = EquicorrStructure::new(2, 0.5).unwrap().matrix();
        let d = u.transpose() * c * &u;
        assert!(max_abs_diff(&d, &Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.5, 0.5]))) < 1e-12);
        assert!(equicorr_eigenbasis(0).is_err());
    }

    #[test]
    fn basis_diagonalizes_q5() {
        let u = equicorr_eigenbasis(5).unwrap();
        let c = EquicorrStructure::new(5, 0.8).unwrap().matrix();
        let d = u.transpose() * c * &u;
        let expected = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.2, 0.2, 0.2, 0.2, 0.2]));
        assert!(max_abs_diff(&d, &expected) < 1e-12);
    }

    #[test]
    fn basis_works_for_every_rho() {
        for q in 2..=10 {
            let u = equicorr_eigenbasis(q).unwrap();
            assert!(max_abs_diff(&(u.transpose() * &u), &Matrix::identity(q, q)) < 1e-12);
            for k in 0..5 {
                let rho = 0.2 * k as f64;
                let c = EquicorrStructure::new(q, rho).unwrap();
                let d = u.transpose() * c.matrix() * &u;
                let expected = Matrix::from_diagonal(&c.eigenvalues().into());
                assert!(max_abs_diff(&d, &expected) <= 1e-12, "q={q} rho={rho}");
                let det: f64 = c.eigenvalues().iter().product();
                assert!((det - c.determinant()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigenvalue_closed_form() {
        assert_eq!(equicorr_eigenvalues(4, 0.0).unwrap(), vec![1.0; 4]);
        assert_eq!(equicorr_eigenvalues(3, 0.5).unwrap(), vec![2.0, 0.5, 0.5]);
        for q in 1..12 {
            let sum: f64 = equicorr_eigenvalues(q, 0.37).unwrap().iter().sum();
            assert!((sum - q as f64).abs() < 1e-12);
        }
        assert!(equicorr_eigenvalues(3, 1.0).is_err());
        assert!(equicorr_eigenvalues(3, -0.1).is_err());
    }

    #[test]
    fn inverse_coefficients_match_matrix_inverse() {
        for q in 2..6 {
            let c = EquicorrStructure::new(q, 0.6).unwrap();
            let (a, b) = c.inverse_coefficients();
            let inv = Matrix::identity(q, q) * a + Matrix::from_element(q, q, b);
            assert!(max_abs_diff(&(inv * c.matrix()), &Matrix::identity(q, q)) < 1e-12);
        }
    }

    #[test]
    fn centering() {
        let z = Matrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let y = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = Dataset::center_columns(z, y).unwrap();
        assert_eq!(d.y.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(d.y_means, vec![2.0]);
        assert_eq!(d.z.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(d.z_means, vec![2.0, 5.0]);
        let again = Dataset::center_columns(d.z.clone(), d.y.clone()).unwrap();
        assert_eq!(again.z, d.z);
        assert_eq!(again.y, d.y);
        assert!(Dataset::center_columns(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn prediction_adds_back_means() {
        let z = Matrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = Matrix::from_row_slice(3, 1, &[10.0, 12.0, 14.0]);
        let d = Dataset::center_columns(z, y).unwrap();
        let pred = d.predict(&Matrix::from_element(1, 1, 2.0), &Matrix::from_element(1, 1, 3.0)).unwrap();
        assert!((pred[(0, 0)] - 16.0).abs() < 1e-12);
    }

    fn random_data(n: usize, p: usize, q: usize, seed: u64) -> Dataset {
        let mut rng = SimRng::new(seed);
        Dataset::center_columns(rng.normal_matrix(n, p), rng.normal_matrix(n, q)).unwrap()
    }

    #[test]
    fn transform_invariants() {
        for &(n, p, q) in &[(6, 3, 2), (4, 7, 3), (30, 5, 1)] {
            let d = random_data(n, p, q, 9);
            let tp = to_transformed(&d).unwrap();
            let zzt = &d.z * d.z.transpose();
            let recon = &tp.l * Matrix::from_diagonal(&tp.s.clone().into()) * tp.l.transpose();
            assert!((recon - &zzt).norm() <= 1e-8 * zzt.norm().max(1.0));
            assert!(max_abs_diff(&(tp.l.transpose() * &tp.l), &Matrix::identity(n, n)) < 1e-10);
            assert!((tp.y_t.norm() - d.y.norm()).abs() < 1e-10);
            assert!((tp.z_t.norm() - d.z.norm()).abs() < 1e-10);
            assert!(tp.s.windows(2).all(|w| w[0] >= w[1]));
            // rotated predictor rows are mutually orthogonal with squared norms s
            let g = &tp.z_t * tp.z_t.transpose();
            assert!(max_abs_diff(&g, &Matrix::from_diagonal(&tp.s.clone().into())) < 1e-9);
        }
    }

    #[test]
    fn transform_identity_predictors() {
        let d = Dataset {
            z: Matrix::identity(4, 4),
            y: Matrix::from_fn(4, 2, |i, j| (i + 3 * j) as f64),
            z_means: vec![0.0; 4],
            y_means: vec![0.0; 2],
            centered: true,
        };
        let tp = to_transformed(&d).unwrap();
        assert!(tp.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((tp.y_t.norm() - d.y.norm()).abs() < 1e-10);
    }

    #[test]
    fn transform_single_response() {
        let d = random_data(8, 2, 1, 4);
        let tp = to_transformed(&d).unwrap();
        assert_eq!(tp.u, Matrix::from_element(1, 1, 1.0));
        assert!(max_abs_diff(&tp.y_t, &(tp.l.transpose() * &d.y)) < 1e-14);
    }

    #[test]
    fn transform_requires_centering() {
        let d = Dataset::raw(Matrix::zeros(3, 1), Matrix::zeros(3, 1)).unwrap();
        assert!(to_transformed(&d).is_err());
    }

    #[test]
    fn back_transforms_round_trip() {
        let mut rng = SimRng::new(12);
        for q in [1, 2, 5] {
            let u = equicorr_eigenbasis(q).unwrap();
            let gamma = rng.normal_matrix(4, q);
            let back = back_transform_gamma(&(&gamma * &u), &u).unwrap();
            assert!(max_abs_diff(&back, &gamma) <= 1e-12);
            assert_eq!(back_transform_gamma(&gamma, &Matrix::identity(q, q)).unwrap(), gamma);
        }
        let u = equicorr_eigenbasis(4).unwrap();
        assert!(max_abs_diff(
            back_transform_precision(&SpdMatrix::identity(4), &u).unwrap().as_matrix(),
            &Matrix::identity(4, 4)
        ) < 1e-12);
        let a = rng.normal_matrix(4, 4);
        let omega_t = SpdMatrix::new(&a * a.transpose() + Matrix::identity(4, 4)).unwrap();
        let omega = back_transform_precision(&omega_t, &u).unwrap();
        assert!(max_abs_diff(&(u.transpose() * omega.as_matrix() * &u), omega_t.as_matrix()) < 1e-10);
        let ev = |m: &Matrix| sym_eigen(m).unwrap().values;
        let (e1, e2) = (ev(omega.as_matrix()), ev(omega_t.as_matrix()));
        assert!(e1.iter().zip(&e2).all(|(a, b)| (a - b).abs() < 1e-10));
        assert_eq!(
            back_transform_precision(&omega_t, &Matrix::identity(4, 4)).unwrap().as_matrix(),
            omega_t.as_matrix()
        );
    }

    #[test]
    fn rotated_coefficients_have_diagonal_prior() {
        // Rows of Γ ~ N(0, σ² C_ρ) ⇒ columns of Γ U have covariance σ² D_ρ.
        let (q, rho, sigma2) = (3, 0.6, 2.0);
        let c = EquicorrStructure::new(q, rho).unwrap();
        let cov = SpdMatrix::new(c.matrix() * sigma2).unwrap();
        let mut rng = SimRng::new(5);
        let gamma = crate::numerics::sample_matrix_normal(&mut rng, 100_000, &crate::numerics::RowCov::Identity, &cov)
            .unwrap();
        let u = equicorr_eigenbasis(q).unwrap();
        let gt = &gamma * &u;
        let emp = gt.transpose() * &gt / 100_000.0;
        for (j, d) in c.eigenvalues().iter().enumerate() {
            assert!((emp[(j, j)] / (sigma2 * d) - 1.0).abs() < 0.03);
        }
    }
}
