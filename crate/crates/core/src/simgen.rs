//! Synthetic data: AR(1) predictors, masked matrix-normal coefficients and
//! error covariances specified in the rotated basis.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{build_features, FeatureRecipe};
use crate::model::{equicorr_eigenbasis, Dataset, EquicorrStructure};
use crate::numerics::{sample_matrix_normal, symmetrize, Matrix, RowCov, SimRng, SpdMatrix};

/// Structure of the rotated error covariance `Σ̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorStructure {
    Identity,
    Ar1 { rho_e: f64 },
    Fgn { hurst: f64 },
    Equicorr { rho_e: f64 },
}

impl ErrorStructure {
    fn validate(&self) -> Result<()> {
        match *self {
            ErrorStructure::Identity => Ok(()),
            ErrorStructure::Ar1 { rho_e } if rho_e.abs() < 1.0 => Ok(()),
            ErrorStructure::Ar1 { .. } => Err(Error::param("error_structure.rho_e", "AR(1) needs |rho_e| < 1")),
            ErrorStructure::Fgn { hurst } if hurst > 0.0 && hurst < 1.0 => Ok(()),
            ErrorStructure::Fgn { .. } => Err(Error::param("error_structure.hurst", "must lie in (0, 1)")),
            ErrorStructure::Equicorr { rho_e } if (0.0..1.0).contains(&rho_e) => Ok(()),
            ErrorStructure::Equicorr { .. } => Err(Error::param("error_structure.rho_e", "must lie in [0, 1)")),
        }
    }

    /// `Σ̃` for `q` responses.
    pub fn transformed_matrix(&self, q: usize) -> Matrix {
        Matrix::from_fn(q, q, |i, j| {
            let k = i.abs_diff(j) as f64;
            match *self {
                ErrorStructure::Identity => f64::from(u8::from(i == j)),
                ErrorStructure::Ar1 { rho_e } => rho_e.powf(k),
                ErrorStructure::Fgn { hurst } => {
                    let h2 = 2.0 * hurst;
                    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
                }
                ErrorStructure::Equicorr { rho_e } => {
                    if i == j {
                        1.0
                    } else {
                        rho_e
                    }
                }
            }
        })
    }
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Correlation among the coefficients of one predictor.
    pub rho: f64,
    /// Coefficient standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Element-wise sparsity.
    #[serde(default)]
    pub s: f64,
    /// Row (group) sparsity.
    #[serde(default)]
    pub s_g: f64,
    pub rho_z: f64,
    pub error_structure: ErrorStructure,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::param("n/p/q", "dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::param("rho", format!("must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::param("sigma", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::param("s", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.s_g) {
            return Err(Error::param("s_g", "must lie in [0, 1]"));
        }
        if !(self.rho_z.abs() < 1.0) {
            return Err(Error::param("rho_z", "must lie in (-1, 1)"));
        }
        self.error_structure.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    /// Raw (uncentered) data.
    pub data: Dataset,
    pub gamma_true: Matrix,
    pub sigma_z: SpdMatrix,
    /// Error covariance in the original basis.
    pub error_cov: SpdMatrix,
    pub errors: Matrix,
}

pub fn ar1_matrix(p: usize, rho: f64) -> Matrix {
    Matrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Rows i.i.d. `N_p(0, Σ_Z)` with `(Σ_Z)_ij = ρ_Z^|i−j|`.
pub fn gen_predictors(rng: &mut SimRng, n: usize, p: usize, rho_z: f64) -> Result<Matrix> {
    if !(rho_z.abs() < 1.0) {
        return Err(Error::param("rho_z", "must lie in (-1, 1)"));
    }
    let cov = SpdMatrix::new(ar1_matrix(p, rho_z))?;
    sample_matrix_normal(rng, n, &RowCov::Identity, &cov)
}

/// `Γ = W ⊙ K ⊙ Q`: rows of `W` i.i.d. `N_q(0, σ² C_ρ)`, `K` entries
/// Bernoulli(1 − s), `Q` rows all ones with probability `1 − s_g`.
pub fn gen_coefficients(rng: &mut SimRng, p: usize, q: usize, sigma: f64, rho: f64, s: f64, s_g: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&s_g) {
        return Err(Error::param("s", "sparsity levels must lie in [0, 1]"));
    }
    let c = EquicorrStructure::new(q, rho)?.matrix();
    let w = if sigma > 0.0 {
        sample_matrix_normal(rng, p, &RowCov::Identity, &SpdMatrix::new(c * (sigma * sigma))?)?
    } else {
        // Keep the stream aligned with the σ > 0 case.
        rng.normal_matrix(p, q) * 0.0
    };
    let mut k = Matrix::zeros(p, q);
    for v in k.iter_mut() {
        *v = f64::from(u8::from(rng.bernoulli(1.0 - s)));
    }
    let rows: Vec<f64> = (0..p).map(|_| f64::from(u8::from(rng.bernoulli(1.0 - s_g)))).collect();
    Ok(Matrix::from_fn(p, q, |i, j| w[(i, j)] * k[(i, j)] * rows[i]))
}

/// `Σ = U Σ̃ Uᵀ` for the given structure.
pub fn gen_error_cov(structure: &ErrorStructure, q: usize, u: &Matrix) -> Result<SpdMatrix> {
    structure.validate()?;
    if u.shape() != (q, q) {
        return Err(Error::Dimension(format!("U must be {q}x{q}")));
    }
    let tilde = structure.transformed_matrix(q);
    SpdMatrix::new(symmetrize(&(u * tilde * u.transpose())))
}

/// Draws `Z`, then `W`, `K`, `Q`, then `E`, all from one stream seeded by `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimInstance> {
    simulate_with(config, &mut SimRng::new(config.seed))
}

pub fn simulate_with(config: &SimConfig, rng: &mut SimRng) -> Result<SimInstance> {
    config.validate()?;
    let SimConfig { n, p, q, .. } = *config;
    let sigma_z = SpdMatrix::new(ar1_matrix(p, config.rho_z))?;
    let z = sample_matrix_normal(rng, n, &RowCov::Identity, &sigma_z)?;
    let gamma = gen_coefficients(rng, p, q, config.sigma, config.rho, config.s, config.s_g)?;
    let u = equicorr_eigenbasis(q)?;
    let error_cov = gen_error_cov(&config.error_structure, q, &u)?;
    let errors = sample_matrix_normal(rng, n, &RowCov::Identity, &error_cov)?;
    let y = &z * &gamma + &errors;
    Ok(SimInstance {
        data: Dataset::raw(z, y)?,
        gamma_true: gamma,
        sigma_z,
        error_cov,
        errors,
    })
}

/// Daily multi-response series driven by calendar features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub n_days: usize,
    pub q: usize,
    /// Correlation among the coefficients of one feature across responses.
    pub rho: f64,
    pub noise_sd: f64,
    /// Correlation of the noise across responses.
    pub noise_corr: f64,
    /// Added to every response so that column maxima are positive.
    pub level: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SeriesInstance {
    pub y: Matrix,
    pub recipe: FeatureRecipe,
    pub gamma_true: Matrix,
}

/// Column-standardizes a design; zero-variance columns are only centered.
pub fn standardize_columns(z: &Matrix) -> Matrix {
    let n = z.nrows() as f64;
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 1e-12 {
            col.unscale_mut(sd);
        }
    }
    out
}

/// `Y = level + Z_std Γ + E` with `Z` the default daily calendar recipe,
/// rows of `Γ` from `N_q(0, C_ρ)` and equicorrelated Gaussian noise.
pub fn gen_series(config: &SeriesConfig) -> Result<SeriesInstance> {
    if config.q == 0 || config.n_days < 2 {
        return Err(Error::param("series", "need q >= 1 and at least two days"));
    }
    if !(config.noise_sd >= 0.0) {
        return Err(Error::param("noise_sd", "must be nonnegative"));
    }
    let mut rng = SimRng::new(config.seed);
    let recipe = FeatureRecipe::nyc_default(config.start, config.n_days);
    let t: Vec<usize> = (0..config.n_days).collect();
    let z = standardize_columns(&build_features(&recipe, &t)?);
    let p = z.ncols();
    let gamma = gen_coefficients(&mut rng, p, config.q, 1.0, config.rho, 0.0, 0.0)?;
    let noise_cov = EquicorrStructure::new(config.q, config.noise_corr)?.matrix() * (config.noise_sd * config.noise_sd);
    let noise = if config.noise_sd > 0.0 {
        sample_matrix_normal(&mut rng, config.n_days, &RowCov::Identity, &SpdMatrix::new(noise_cov)?)?
    } else {
        Matrix::zeros(config.n_days, config.q)
    };
    let y = (&z * &gamma + noise).add_scalar(config.level);
    Ok(SeriesInstance {
        y,
        recipe,
        gamma_true: gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;

    fn base_config() -> SimConfig {
        SimConfig {
            n: 50,
            p: 20,
            q: 5,
            rho: 0.4,
            sigma: 1.0,
            s: 0.2,
            s_g: 0.0,
            rho_z: 0.7,
            error_structure: ErrorStructure::Identity,
            seed: 1,
        }
    }

    #[test]
    fn predictor_covariance() {
        assert!((ar1_matrix(5, 0.7)[(1, 3)] - 0.49).abs() < 1e-15);
        let mut rng = SimRng::new(2);
        let z = gen_predictors(&mut rng, 100_000, 3, 0.0).unwrap();
        let cov = z.transpose() * &z / 100_000.0;
        assert!(max_abs_diff(&cov, &Matrix::identity(3, 3)) < 0.03);

        let z = gen_predictors(&mut rng, 100_000, 3, 0.7).unwrap();
        let cov = z.transpose() * &z / 100_000.0;
        let corr = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!((corr - 0.7).abs() < 0.02);
        assert!(gen_predictors(&mut rng, 5, 3, 1.0).is_err());
    }

    #[test]
    fn coefficient_masks() {
        let mut rng = SimRng::new(3);
        assert_eq!(gen_coefficients(&mut rng, 10, 3, 1.0, 0.5, 1.0, 0.0).unwrap().amax(), 0.0);

        let g = gen_coefficients(&mut rng, 20_000, 5, 1.5, 0.0, 0.0, 0.0).unwrap();
        let var = g.iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((var / 2.25 - 1.0).abs() < 0.03);

        let g = gen_coefficients(&mut rng, 10_000, 3, 1.0, 0.3, 0.0, 0.5).unwrap();
        let zero_rows = g.row_iter().filter(|r| r.amax() == 0.0).count() as f64 / 10_000.0;
        assert!((zero_rows - 0.5).abs() < 0.02);

        let g = gen_coefficients(&mut rng, 50_000, 2, 1.0, 0.8, 0.0, 0.0).unwrap();
        let c = g.transpose() * &g / 50_000.0;
        assert!((c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt() - 0.8).abs() < 0.02);
    }

    #[test]
    fn error_structures() {
        let fgn = ErrorStructure::Fgn { hurst: 0.95 }.transformed_matrix(4);
        assert!((0..4).all(|i| (fgn[(i, i)] - 1.0).abs() < 1e-15));
        assert!((fgn[(0, 1)] - 0.5 * (2f64.powf(1.9) - 2.0)).abs() < 1e-14);
        // H = 1/2 is white noise
        let white = ErrorStructure::Fgn { hurst: 0.5 }.transformed_matrix(4);
        assert!(max_abs_diff(&white, &Matrix::identity(4, 4)) < 1e-14);

        let ar = ErrorStructure::Ar1 { rho_e: 0.75 }.transformed_matrix(5);
        assert!((ar[(0, 2)] - 0.5625).abs() < 1e-15);
        let inv = ar.clone().try_inverse().unwrap();
        for i in 0..5usize {
            for j in 0..5 {
                if i.abs_diff(j) >= 2 {
                    assert!(inv[(i, j)].abs() <= 1e-8);
                }
            }
        }

        let u = equicorr_eigenbasis(5).unwrap();
        for st in [
            ErrorStructure::Identity,
            ErrorStructure::Ar1 { rho_e: 0.75 },
            ErrorStructure::Fgn { hurst: 0.95 },
            ErrorStructure::Equicorr { rho_e: 0.9 },
        ] {
            let sigma = gen_error_cov(&st, 5, &u).unwrap();
            let back = u.transpose() * sigma.as_matrix() * &u;
            assert!(max_abs_diff(&back, &st.transformed_matrix(5)) < 1e-10);
        }
        assert!(gen_error_cov(&ErrorStructure::Equicorr { rho_e: 1.0 }, 3, &equicorr_eigenbasis(3).unwrap()).is_err());
    }

    #[test]
    fn simulate_contract() {
        let cfg = base_config();
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.data.z.shape(), (50, 20));
        assert_eq!(a.data.y.shape(), (50, 5));
        assert_eq!(a.gamma_true.shape(), (20, 5));
        assert_eq!(a.data.y, &a.data.z * &a.gamma_true + &a.errors);

        let quiet = SimConfig { sigma: 0.0, ..cfg.clone() };
        let c = simulate(&quiet).unwrap();
        assert_eq!(c.gamma_true.amax(), 0.0);
        assert!(max_abs_diff(&c.data.y, &c.errors) == 0.0);

        assert!(simulate(&SimConfig { rho: 1.5, ..cfg }).is_err());
    }

    #[test]
    fn error_draws_match_covariance() {
        let cfg = SimConfig {
            n: 100_000,
            p: 1,
            q: 3,
            sigma: 0.0,
            error_structure: ErrorStructure::Equicorr { rho_e: 0.6 },
            ..base_config()
        };
        let inst = simulate(&cfg).unwrap();
        let cov = inst.errors.transpose() * &inst.errors / 100_000.0;
        assert!(max_abs_diff(&cov, inst.error_cov.as_matrix()) < 0.03);
    }

    #[test]
    fn series_shapes() {
        let cfg = SeriesConfig {
            n_days: 730,
            q: 2,
            rho: 0.95,
            noise_sd: 1.0,
            noise_corr: 0.5,
            level: 10.0,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            seed: 5,
        };
        let s = gen_series(&cfg).unwrap();
        assert_eq!(s.y.shape(), (730, 2));
        assert_eq!(s.recipe.width(), 68);
        assert_eq!(s.gamma_true.shape(), (68, 2));
    }
}
