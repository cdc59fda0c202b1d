//! EM estimation of `Θ = {Ω, σ², ρ}` and E-BLUP prediction of the random
//! coefficient matrix.
//!
//! All iterations run in the rotated coordinates of [`to_transformed`], where
//! the coefficient prior `Δ⁻¹ = σ² D_ρ` is diagonal and the rows of the rotated
//! design are orthogonal. In that basis the marginal covariance of `vec(Y)`
//! splits into `n` independent `q x q` blocks `B_i = Σ̃ + s_i Δ⁻¹`, which is
//! what [`e_step`] exploits. [`e_step_dense`] builds the full `nq x nq` joint
//! covariance with Kronecker products and serves as the reference path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::kfold_split;
use crate::glasso::{glasso_fit_warm, glasso_objective, GlassoOptions, GlassoProblem, GlassoSolution};
use crate::model::{
    back_transform_gamma, back_transform_precision, equicorr_eigenbasis, to_transformed, Dataset, ParameterSet,
    TransformedProblem, RHO_MAX,
};
use crate::numerics::{kron, spd_solve, symmetrize, unvec, vec, Matrix, SimRng, SpdMatrix};

/// Conditional moments of the E-step.
#[derive(Debug, Clone)]
pub struct EStepMoments {
    /// `E[(Y − ZΓ)ᵀ(Y − ZΓ) | Y]`
    pub q1: Matrix,
    /// `E[Γᵀ Γ | Y]`
    pub q2: Matrix,
    /// `E[Γ | Y]`
    pub gamma_mean: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Sum of absolute changes in the entries of Θ.
    ParameterChange,
    /// Relative change of the penalized objective.
    #[default]
    LoglikRelative,
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub lambda_omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub stopping_rule: StoppingRule,
    pub glasso: GlassoOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_omega: 0.1,
            tol: 1e-4,
            max_iter: 200,
            stopping_rule: StoppingRule::LoglikRelative,
            glasso: GlassoOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn with_lambda(mut self, lambda_omega: f64) -> Self {
        self.lambda_omega = lambda_omega;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        if !(self.lambda_omega >= 0.0) || !self.lambda_omega.is_finite() {
            return Err(Error::param("lambda_omega", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Predicted coefficients in the original basis.
    pub gamma_star: Matrix,
    /// Estimated parameters with Ω in the original basis.
    pub theta_hat: ParameterSet,
    /// Ω̃, the precision estimate in the rotated basis the penalty acts on.
    pub omega_transformed: SpdMatrix,
    /// Penalized objective at the start and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_dims(tp: &TransformedProblem, theta: &ParameterSet) -> Result<()> {
    if theta.q() != tp.q() || tp.z_t.nrows() != tp.n() || tp.s.len() != tp.n() {
        return Err(Error::Dimension(format!(
            "parameters for q = {} but data has q = {}",
            theta.q(),
            tp.q()
        )));
    }
    Ok(())
}

/// Cholesky inverse of the marginal covariance block of row `i`.
fn row_block_inverse(sigma: &Matrix, s_i: f64, delta: &[f64]) -> Result<(Matrix, f64)> {
    let mut b = sigma.clone();
    for (j, d) in delta.iter().enumerate() {
        b[(j, j)] += s_i * d;
    }
    let chol = b.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        condition: crate::numerics::sym_eigen(&b)
            .map(|e| e.values[0] / e.values[e.values.len() - 1].abs().max(f64::MIN_POSITIVE))
            .unwrap_or(f64::INFINITY),
    })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol.inverse(), log_det))
}

/// E-step via the per-observation block structure of the rotated model.
pub fn e_step(tp: &TransformedProblem, theta: &ParameterSet) -> Result<EStepMoments> {
    check_dims(tp, theta)?;
    let (n, p, q) = (tp.n(), tp.p(), tp.q());
    let sigma = theta.omega.inverse()?.into_inner();
    let delta = theta.prior_variances();
    let d = Matrix::from_diagonal(&delta.clone().into());

    let mut weighted = Matrix::zeros(n, q);
    let mut c1 = Matrix::zeros(q, q);
    let mut c2 = Matrix::zeros(q, q);
    for i in 0..n {
        let s_i = tp.s[i];
        let (binv, _) = row_block_inverse(&sigma, s_i, &delta)?;
        let y_i = tp.y_t.row(i).transpose();
        weighted.set_row(i, &(&binv * y_i).transpose());
        if s_i > 0.0 {
            let m = &d * &binv * &d;
            c1 += &m * s_i;
            c2 += &m * (s_i * s_i);
        }
    }

    let gamma_mean = tp.z_t.transpose() * &weighted * &d;
    let q2 = gamma_mean.transpose() * &gamma_mean + &d * p as f64 - c1;
    let resid = &tp.y_t - &tp.z_t * &gamma_mean;
    let total_s: f64 = tp.s.iter().sum();
    let q1 = resid.transpose() * &resid + &d * total_s - c2;

    Ok(EStepMoments {
        q1: symmetrize(&q1),
        q2: symmetrize(&q2),
        gamma_mean,
    })
}

fn block_traces(cov: &Matrix, block: usize, q: usize) -> Matrix {
    Matrix::from_fn(q, q, |j, k| {
        (0..block).map(|t| cov[(j * block + t, k * block + t)]).sum::<f64>()
    })
}

/// Reference E-step: Gaussian conditioning of `vec(AΓ)` on `vec(Y)` using the
/// full Kronecker-structured joint covariance, for `A = I_p` and `A = Z`.
pub fn e_step_dense(tp: &TransformedProblem, theta: &ParameterSet) -> Result<EStepMoments> {
    check_dims(tp, theta)?;
    let (n, p, q) = (tp.n(), tp.p(), tp.q());
    let z = &tp.z_t;
    let sigma = theta.omega.inverse()?.into_inner();
    let dinv = Matrix::from_diagonal(&theta.prior_variances().into());
    let zzt = z * z.transpose();

    let s22 = SpdMatrix::new(symmetrize(&(kron(&sigma, &Matrix::identity(n, n)) + kron(&dinv, &zzt))))?;
    let y = vec(&tp.y_t);
    let s22_inv_y = spd_solve(&s22, &y)?;

    // A = I_p
    let s12 = kron(&dinv, &z.transpose());
    let gamma_mean = unvec(&(&s12 * &s22_inv_y), p, q)?;
    let cov = kron(&dinv, &Matrix::identity(p, p)) - &s12 * spd_solve(&s22, &s12.transpose())?;
    let q2 = gamma_mean.transpose() * &gamma_mean + block_traces(&cov, p, q);

    // A = Z
    let s12z = kron(&dinv, &zzt);
    let g_mean = unvec(&(&s12z * &s22_inv_y), n, q)?;
    let covz = kron(&dinv, &zzt) - &s12z * spd_solve(&s22, &s12z.transpose())?;
    let egg = g_mean.transpose() * &g_mean + block_traces(&covz, n, q);
    let yty = tp.y_t.transpose() * &tp.y_t;
    let cross = tp.y_t.transpose() * &g_mean;
    let q1 = yty - &cross - cross.transpose() + egg;

    Ok(EStepMoments {
        q1: symmetrize(&q1),
        q2: symmetrize(&q2),
        gamma_mean,
    })
}

/// Ω-update: graphical lasso on `Q1 / n`.
pub fn m_step_omega(
    q1: &Matrix,
    n: usize,
    lambda_omega: f64,
    opts: &GlassoOptions,
    warm: Option<&GlassoSolution>,
) -> Result<GlassoSolution> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    let problem = GlassoProblem {
        s: q1 / n as f64,
        lambda: lambda_omega,
    };
    glasso_fit_warm(&problem, opts, warm)
}

/// `Σ_j [ q_j / (p σ² d_j(ρ)) + log(σ² d_j(ρ)) ]`, the (σ², ρ) part of the
/// M-step objective written with the diagonal of `Q2`.
pub fn variance_objective(q2_diag: &[f64], p: usize, sigma2: f64, rho: f64) -> f64 {
    let q = q2_diag.len();
    q2_diag
        .iter()
        .enumerate()
        .map(|(j, qj)| {
            let d = if j == 0 { 1.0 + (q as f64 - 1.0) * rho } else { 1.0 - rho };
            let v = sigma2 * d;
            qj / (p as f64 * v) + v.ln()
        })
        .sum()
}

/// Closed-form minimizer of [`variance_objective`] over `σ² > 0`, `ρ ∈ [0, RHO_MAX]`.
///
/// With `a = σ² d₁` and `b = σ²(1 − ρ)` the objective separates; its
/// unconstrained minimum is `a = v₁ = q₁/p`, `b = v₂ = Σ_{j≥2} q_j / (p(q−1))`,
/// feasible exactly when `v₁ ≥ v₂`. Otherwise the constraint `ρ = 0` binds.
pub fn m_step_variance(q2: &Matrix, p: usize) -> Result<(f64, f64)> {
    let q = q2.nrows();
    if q == 0 || !q2.is_square() || p == 0 {
        return Err(Error::Dimension("Q2 must be a non-empty square matrix and p > 0".into()));
    }
    let diag: Vec<f64> = q2.diagonal().iter().copied().collect();
    if diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::param("Q2", "diagonal entries must be positive"));
    }
    let pf = p as f64;
    let qf = q as f64;
    if q == 1 {
        return Ok((diag[0] / pf, 0.0));
    }
    let v1 = diag[0] / pf;
    let v2 = diag[1..].iter().sum::<f64>() / (pf * (qf - 1.0));
    if v1 > v2 {
        let rho = (v1 - v2) / (v1 + (qf - 1.0) * v2);
        if rho <= RHO_MAX {
            return Ok(((v1 + (qf - 1.0) * v2) / qf, rho));
        }
        // Boundary: profile σ² at ρ = RHO_MAX.
        let d1 = 1.0 + (qf - 1.0) * RHO_MAX;
        let d2 = 1.0 - RHO_MAX;
        let sigma2 = (diag[0] / d1 + diag[1..].iter().sum::<f64>() / d2) / (pf * qf);
        return Ok((sigma2, RHO_MAX));
    }
    Ok((diag.iter().sum::<f64>() / (pf * qf), 0.0))
}

/// Penalized observed-data objective,
/// `(1/n) Σ_i [ y_iᵀ B_i⁻¹ y_i + log|B_i| ] + λ Σ_{j≠k} |ω̃_jk|`,
/// i.e. `(2/n)(−log p(Y | Θ))` up to a constant plus the penalty. EM never increases it.
pub fn observed_objective(tp: &TransformedProblem, theta: &ParameterSet, lambda_omega: f64) -> Result<f64> {
    check_dims(tp, theta)?;
    let sigma = theta.omega.inverse()?.into_inner();
    let delta = theta.prior_variances();
    let mut total = 0.0;
    for i in 0..tp.n() {
        let (binv, log_det) = row_block_inverse(&sigma, tp.s[i], &delta)?;
        let y_i = tp.y_t.row(i).transpose();
        total += (y_i.transpose() * &binv * &y_i)[(0, 0)] + log_det;
    }
    let o = theta.omega.as_matrix();
    let q = o.nrows();
    let l1: f64 = (0..q)
        .flat_map(|j| (0..q).map(move |k| (j, k)))
        .filter(|(j, k)| j != k)
        .map(|(j, k)| o[(j, k)].abs())
        .sum();
    Ok(total / tp.n() as f64 + lambda_omega * l1)
}

/// E-BLUP in the rotated basis,
/// `γ* = (Z̃ᵀ R⁻¹ Z̃ + L⁻¹)⁻¹ Z̃ᵀ R⁻¹ y` with `Z̃ = I_q ⊗ Z`,
/// `L = σ² D_ρ ⊗ I_p`, `R = Ω⁻¹ ⊗ I_n`, returned as a `p x q` matrix.
pub fn blup(tp: &TransformedProblem, theta: &ParameterSet) -> Result<Matrix> {
    check_dims(tp, theta)?;
    let (p, q) = (tp.p(), tp.q());
    let omega = theta.omega.as_matrix();
    let ztz = tp.z_t.transpose() * &tp.z_t;
    let prior_prec = Matrix::from_diagonal(&theta.prior_variances().iter().map(|v| 1.0 / v).collect::<Vec<_>>().into());
    // (I⊗Zᵀ)(Ω⊗I)(I⊗Z) = Ω ⊗ ZᵀZ
    let lhs = kron(omega, &ztz) + kron(&prior_prec, &Matrix::identity(p, p));
    let rhs = vec(&(tp.z_t.transpose() * &tp.y_t * omega));
    let gamma = spd_solve(&SpdMatrix::new(symmetrize(&lhs))?, &rhs)?;
    unvec(&gamma, p, q)
}

/// Henderson's form of the same predictor: `γ* = L Z̃ᵀ Ψ⁻¹ y`, `Ψ = Z̃ L Z̃ᵀ + R`.
pub fn blup_henderson(tp: &TransformedProblem, theta: &ParameterSet) -> Result<Matrix> {
    check_dims(tp, theta)?;
    let (n, p, q) = (tp.n(), tp.p(), tp.q());
    let ztil = kron(&Matrix::identity(q, q), &tp.z_t);
    let lmat = kron(&Matrix::from_diagonal(&theta.prior_variances().into()), &Matrix::identity(p, p));
    let r = kron(theta.omega.inverse()?.as_matrix(), &Matrix::identity(n, n));
    let psi = SpdMatrix::new(symmetrize(&(&ztil * &lmat * ztil.transpose() + r)))?;
    let gamma = lmat * ztil.transpose() * spd_solve(&psi, &vec(&tp.y_t))?;
    unvec(&gamma, p, q)
}

/// Compares the E-BLUP with the multivariate ridge estimator
/// `(Z̃ᵀZ̃ + K)⁻¹ Z̃ᵀ y`, `K = (Σ₀ ⊗ I_p) Λ⁻¹`, when `Ω = I / σ_ε²`.
/// Returns the largest absolute elementwise difference.
pub fn ridge_equivalence_check(tp: &TransformedProblem, sigma_eps2: f64, theta: &ParameterSet) -> Result<f64> {
    check_dims(tp, theta)?;
    if !(sigma_eps2 > 0.0) {
        return Err(Error::param("sigma_eps2", "must be positive"));
    }
    let q = tp.q();
    let p = tp.p();
    let scalar = Matrix::identity(q, q) / sigma_eps2;
    let dev = (theta.omega.as_matrix() - &scalar).amax();
    if dev > 1e-10 * scalar.amax() {
        return Err(Error::param(
            "omega",
            format!("must equal I / sigma_eps2 for the ridge equivalence (deviation {dev:.3e})"),
        ));
    }
    let ztil = kron(&Matrix::identity(q, q), &tp.z_t);
    let lambda_inv = kron(
        &Matrix::from_diagonal(&theta.prior_variances().iter().map(|v| 1.0 / v).collect::<Vec<_>>().into()),
        &Matrix::identity(p, p),
    );
    let k = kron(&(Matrix::identity(q, q) * sigma_eps2), &Matrix::identity(p, p)) * lambda_inv;
    let lhs = SpdMatrix::new(symmetrize(&(ztil.transpose() * &ztil + k)))?;
    let ridge = unvec(&spd_solve(&lhs, &(ztil.transpose() * vec(&tp.y_t)))?, p, q)?;
    let pred = blup(tp, theta)?;
    Ok(crate::numerics::max_abs_diff(&ridge, &pred))
}

/// Result of EM in the rotated basis.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    /// Θ with Ω̃ in the rotated basis.
    pub theta: ParameterSet,
    /// E-BLUP in the rotated basis.
    pub gamma_t: Matrix,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn parameter_change(a: &ParameterSet, b: &ParameterSet) -> f64 {
    let omega: f64 = (a.omega.as_matrix() - b.omega.as_matrix()).abs().sum();
    omega + (a.sigma2 - b.sigma2).abs() + (a.rho - b.rho).abs()
}

/// EM iterations on an already rotated problem, started at `Ω̃ = I`, `σ² D_ρ = I`.
pub fn fit_transformed(tp: &TransformedProblem, config: &FitConfig) -> Result<EmOutcome> {
    config.validate()?;
    let (n, p, q) = (tp.n(), tp.p(), tp.q());
    let lambda = config.lambda_omega;
    let mut theta = ParameterSet::initial(q);
    let mut trace = vec![observed_objective(tp, &theta, lambda)?];
    let mut warm: Option<GlassoSolution> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let moments = e_step(tp, &theta)?;

        let candidate = m_step_omega(&moments.q1, n, lambda, &config.glasso, warm.as_ref())?;
        let s = &moments.q1 / n as f64;
        // Keep the previous Ω̃ if the solver's answer is not an improvement, so
        // every iteration is a generalized EM step.
        let omega = if glasso_objective(&s, &candidate.omega, lambda) <= glasso_objective(&s, &theta.omega, lambda) {
            candidate.omega.clone()
        } else {
            theta.omega.clone()
        };
        warm = Some(candidate);

        let (sigma2, rho) = m_step_variance(&moments.q2, p)?;
        let next = ParameterSet::new(omega, sigma2, rho)?;
        let objective = observed_objective(tp, &next, lambda)?;
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(objective);

        let change = match config.stopping_rule {
            StoppingRule::ParameterChange => parameter_change(&theta, &next),
            StoppingRule::LoglikRelative => ((previous - objective) / previous.abs().max(f64::MIN_POSITIVE)).abs(),
        };
        theta = next;
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let gamma_t = blup(tp, &theta)?;
    Ok(EmOutcome {
        theta,
        gamma_t,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Fits the estimator to centered data. Non-convergence within `max_iter` is
/// reported through [`FitResult::converged`], not as an error.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    if !data.centered {
        return Err(Error::param("data", "must be column-centered"));
    }
    if data.n() < 2 {
        return Err(Error::param("n", "need at least two observations"));
    }
    let tp = to_transformed(data)?;
    let em = fit_transformed(&tp, config)?;
    assemble(&tp, em)
}

fn assemble(tp: &TransformedProblem, em: EmOutcome) -> Result<FitResult> {
    let gamma_star = back_transform_gamma(&em.gamma_t, &tp.u)?;
    let omega = back_transform_precision(&em.theta.omega, &tp.u)?;
    Ok(FitResult {
        gamma_star,
        theta_hat: ParameterSet::new(omega, em.theta.sigma2, em.theta.rho)?,
        omega_transformed: em.theta.omega,
        objective_trace: em.objective_trace,
        iterations: em.iterations,
        converged: em.converged,
    })
}

/// One row of a cross-validation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRow {
    pub lambda: f64,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub table: Vec<CvRow>,
}

/// Index of the smallest mean score; exact ties go to the larger penalty.
pub(crate) fn argmin_prefer_larger(rows: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, &(lambda, score)) in rows.iter().enumerate().skip(1) {
        let (best_lambda, best_score) = rows[best];
        if score < best_score || (score == best_score && lambda > best_lambda) {
            best = i;
        }
    }
    best
}

/// Mean squared prediction error of `Z_val Γ` on raw held-out rows, using
/// the training centering.
pub(crate) fn validation_mse(train: &Dataset, gamma: &Matrix, val: &Dataset) -> Result<f64> {
    let pred = train.predict(gamma, &val.z)?;
    Ok((pred - &val.y).map(|v| v * v).mean())
}

/// Chooses `λ_ω` by k-fold cross-validation on validation predictive MSE.
/// Cells whose fit fails score `+∞`.
pub fn select_lambda(
    data: &Dataset,
    lambdas: &[f64],
    folds: usize,
    config: &FitConfig,
    rng: &mut SimRng,
) -> Result<LambdaSelection> {
    if lambdas.is_empty() {
        return Err(Error::param("lambdas", "candidate list is empty"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::param("lambdas", "candidates must be nonnegative"));
    }
    if folds < 2 {
        return Err(Error::param("folds", "need at least two folds"));
    }
    if lambdas.len() == 1 {
        return Ok(LambdaSelection {
            lambda: lambdas[0],
            table: Vec::new(),
        });
    }
    let assignment = kfold_split(data.n(), folds, rng)?;
    let mut scores = vec![vec![f64::INFINITY; assignment.len()]; lambdas.len()];
    for (f, val_idx) in assignment.iter().enumerate() {
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !val_idx.contains(i)).collect();
        let train = data.subset_raw(&train_idx)?.centered()?;
        let val = data.subset_raw(val_idx)?;
        let Ok(tp) = to_transformed(&train) else { continue };
        for (li, &lambda) in lambdas.iter().enumerate() {
            let cfg = config.with_lambda(lambda);
            let score = fit_transformed(&tp, &cfg)
                .and_then(|em| back_transform_gamma(&em.gamma_t, &tp.u))
                .and_then(|gamma| validation_mse(&train, &gamma, &val));
            if let Ok(mse) = score {
                scores[li][f] = mse;
            }
        }
    }
    let table: Vec<CvRow> = lambdas
        .iter()
        .zip(scores)
        .map(|(&lambda, fold_mse)| {
            let mean_mse = fold_mse.iter().sum::<f64>() / fold_mse.len() as f64;
            CvRow {
                lambda,
                fold_mse,
                mean_mse,
            }
        })
        .collect();
    let pairs: Vec<(f64, f64)> = table.iter().map(|r| (r.lambda, r.mean_mse)).collect();
    let best = argmin_prefer_larger(&pairs);
    Ok(LambdaSelection {
        lambda: table[best].lambda,
        table,
    })
}

/// Log-spaced `λ_ω` candidates from the largest off-diagonal magnitude of the
/// rotated response covariance down to `1e-3` of it.
pub fn default_lambda_grid(data: &Dataset, count: usize) -> Result<Vec<f64>> {
    let u = equicorr_eigenbasis(data.q())?;
    let cov = u.transpose() * data.y.transpose() * &data.y * &u / data.n() as f64;
    let q = data.q();
    let mut lmax = 0.0f64;
    for j in 0..q {
        for k in 0..q {
            if j != k {
                lmax = lmax.max(cov[(j, k)].abs());
            }
        }
    }
    if lmax <= 0.0 {
        lmax = 1.0;
    }
    Ok(crate::baselines::log_grid(lmax, 1e-3, count))
}

/// Cross-validated choice of `λ_ω` followed by a fit on all of `data`.
pub fn fit_cv(
    data: &Dataset,
    lambdas: &[f64],
    folds: usize,
    config: &FitConfig,
    rng: &mut SimRng,
) -> Result<(FitResult, LambdaSelection)> {
    let data = data.centered()?;
    let selection = select_lambda(&data, lambdas, folds, config, rng)?;
    let result = fit(&data, &config.with_lambda(selection.lambda))?;
    Ok((result, selection))
}
