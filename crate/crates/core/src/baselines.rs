//! Competing estimators: least squares, ridge (shared and per-response
//! penalties, leave-one-out selection), per-response lasso, row-group lasso
//! and MRCE. Every estimator expects column-centered data and fits no
//! intercept.

use std::collections::BTreeMap;

use crate::em::{argmin_prefer_larger, validation_mse};
use crate::error::{Error, Result};
use crate::evaluation::kfold_split;
use crate::glasso::{glasso_fit_warm, glasso_objective, GlassoOptions, GlassoProblem, GlassoSolution};
use crate::model::Dataset;
use crate::numerics::{sym_eigen, Matrix, SimRng, SpdMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CoefEstimate {
    pub b_hat: Matrix,
    pub method: String,
    pub hyperparams: BTreeMap<String, f64>,
}

impl CoefEstimate {
    fn new(b_hat: Matrix, method: &str, hyperparams: &[(&str, f64)]) -> Result<Self> {
        if b_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient estimate"));
        }
        Ok(Self {
            b_hat,
            method: method.to_string(),
            hyperparams: hyperparams.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    }
}

/// `count` log-spaced values from `max` down to `ratio · max`.
pub fn log_grid(max: f64, ratio: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count)
            .map(|i| max * ratio.powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Number of points in the default penalty grids.
pub const DEFAULT_GRID_LEN: usize = 20;

fn require_centered(data: &Dataset) -> Result<()> {
    if !data.centered {
        return Err(Error::param("data", "must be column-centered"));
    }
    Ok(())
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::param("lambdas", "grid is empty"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::param("lambdas", "values must be finite and nonnegative"));
    }
    Ok(())
}

fn check_folds(folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::param("folds", "need at least two folds"));
    }
    Ok(())
}

pub fn ols_fit(data: &Dataset) -> Result<CoefEstimate> {
    require_centered(data)?;
    let gram = data.z.transpose() * &data.z;
    let eig = sym_eigen(&gram)?;
    let largest = eig.values.first().copied().unwrap_or(0.0);
    let smallest = eig.values.last().copied().unwrap_or(0.0);
    if !(smallest > 1e-12 * largest) {
        return Err(Error::param(
            "Z",
            format!("design is rank deficient (eigenvalue range {smallest:.3e} .. {largest:.3e})"),
        ));
    }
    let b = crate::numerics::spd_solve(&SpdMatrix::new(gram)?, &(data.z.transpose() * &data.y))?;
    CoefEstimate::new(b, "ols", &[])
}

/// Spectral form of the ridge problem, reused across penalties.
struct RidgeSpectrum {
    /// `Z V`
    a: Matrix,
    /// eigenvalues of `ZᵀZ`
    s: Vec<f64>,
    v: Matrix,
    /// `(ZV)ᵀ Y`
    aty: Matrix,
}

impl RidgeSpectrum {
    fn new(z: &Matrix, y: &Matrix) -> Result<Self> {
        let eig = sym_eigen(&(z.transpose() * z))?;
        let a = z * &eig.vectors;
        let aty = a.transpose() * y;
        Ok(Self {
            a,
            s: eig.values,
            v: eig.vectors,
            aty,
        })
    }

    fn coefficients(&self, lambda: f64) -> Matrix {
        let mut scaled = self.aty.clone();
        for (k, sk) in self.s.iter().enumerate() {
            scaled.row_mut(k).unscale_mut(sk + lambda);
        }
        &self.v * scaled
    }

    /// Sum of squared leave-one-out residuals `e_i / (1 − h_ii)` per response.
    fn loo_errors(&self, y: &Matrix, lambda: f64) -> Vec<f64> {
        let n = self.a.nrows();
        let inv: Vec<f64> = self.s.iter().map(|sk| 1.0 / (sk + lambda)).collect();
        let mut scaled = self.aty.clone();
        for (k, w) in inv.iter().enumerate() {
            scaled.row_mut(k).scale_mut(*w);
        }
        let fitted = &self.a * scaled;
        let mut out = vec![0.0; y.ncols()];
        for i in 0..n {
            let h: f64 = self.a.row(i).iter().zip(&inv).map(|(x, w)| x * x * w).sum();
            for (j, o) in out.iter_mut().enumerate() {
                let e = (y[(i, j)] - fitted[(i, j)]) / (1.0 - h);
                *o += e * e;
            }
        }
        out
    }
}

/// Largest penalty of the default ridge grid, `10 · tr(ZᵀZ) / p`.
pub fn ridge_lambda_max(data: &Dataset) -> f64 {
    let tr: f64 = data.z.iter().map(|v| v * v).sum();
    (10.0 * tr / data.p() as f64).max(f64::MIN_POSITIVE)
}

pub fn default_ridge_grid(data: &Dataset) -> Vec<f64> {
    log_grid(ridge_lambda_max(data), 1e-3, DEFAULT_GRID_LEN)
}

/// Closed-form leave-one-out error per response for ridge at `lambda`.
pub fn ridge_loo_errors(data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    let spec = RidgeSpectrum::new(&data.z, &data.y)?;
    Ok(spec.loo_errors(&data.y, lambda))
}

pub fn ridge_with_lambda(data: &Dataset, lambda: f64) -> Result<Matrix> {
    Ok(RidgeSpectrum::new(&data.z, &data.y)?.coefficients(lambda))
}

/// Ridge with one penalty for all responses, chosen by leave-one-out error
/// summed over responses.
pub fn ridge_fit_shared(data: &Dataset, lambdas: &[f64]) -> Result<CoefEstimate> {
    require_centered(data)?;
    check_grid(lambdas)?;
    let spec = RidgeSpectrum::new(&data.z, &data.y)?;
    let scores: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| (l, spec.loo_errors(&data.y, l).iter().sum::<f64>()))
        .map(|(l, e)| (l, if e.is_finite() { e } else { f64::INFINITY }))
        .collect();
    let lambda = lambdas[argmin_prefer_larger(&scores)];
    CoefEstimate::new(spec.coefficients(lambda), "ridge", &[("lambda", lambda)])
}

/// Ridge with a leave-one-out chosen penalty per response.
pub fn ridge_fit_separate(data: &Dataset, lambdas: &[f64]) -> Result<CoefEstimate> {
    require_centered(data)?;
    check_grid(lambdas)?;
    let spec = RidgeSpectrum::new(&data.z, &data.y)?;
    let errs: Vec<Vec<f64>> = lambdas.iter().map(|&l| spec.loo_errors(&data.y, l)).collect();
    let mut b = Matrix::zeros(data.p(), data.q());
    let mut chosen = Vec::with_capacity(data.q());
    for j in 0..data.q() {
        let scores: Vec<(f64, f64)> = lambdas
            .iter()
            .zip(&errs)
            .map(|(&l, e)| (l, if e[j].is_finite() { e[j] } else { f64::INFINITY }))
            .collect();
        let lambda = lambdas[argmin_prefer_larger(&scores)];
        b.set_column(j, &spec.coefficients(lambda).column(j));
        chosen.push(lambda);
    }
    let names: Vec<String> = (0..data.q()).map(|j| format!("lambda_{j}")).collect();
    let hp: Vec<(&str, f64)> = names.iter().map(String::as_str).zip(chosen).collect();
    CoefEstimate::new(b, "ridge-separate", &hp)
}

#[derive(Debug, Clone, Copy)]
pub struct CdOptions {
    /// Bound on the KKT residual at return.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 20_000,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Largest KKT residual of `½‖y − Zβ‖² + λ‖β‖₁` given `g = Zᵀ(y − Zβ)`.
fn lasso_kkt(g: &[f64], beta: &[f64], lambda: f64) -> f64 {
    g.iter()
        .zip(beta)
        .map(|(gj, bj)| {
            if *bj == 0.0 {
                (gj.abs() - lambda).max(0.0)
            } else {
                (gj - lambda * bj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent for `½‖y − Zβ‖² + λ‖β‖₁`, stopping once the
/// KKT residual is below `opts.tol`.
pub fn lasso_cd(z: &Matrix, y: &[f64], lambda: f64, opts: &CdOptions, warm: Option<&[f64]>) -> Result<Vec<f64>> {
    let (n, p) = z.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("response of length {} for {n} rows", y.len())));
    }
    let norms: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
    let mut beta = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut r: Vec<f64> = y.to_vec();
    for (j, bj) in beta.iter().enumerate() {
        if *bj != 0.0 {
            for i in 0..n {
                r[i] -= z[(i, j)] * bj;
            }
        }
    }
    let grad = |r: &[f64]| -> Vec<f64> { z.column_iter().map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum()).collect() };
    let mut violation = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        for j in 0..p {
            if norms[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = z.column(j);
            let gj: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
            let new = soft_threshold(gj + norms[j] * beta[j], lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, zi) in r.iter_mut().zip(col.iter()) {
                    *ri -= zi * delta;
                }
                beta[j] = new;
            }
        }
        violation = lasso_kkt(&grad(&r), &beta, lambda);
        if violation <= opts.tol {
            return Ok(beta);
        }
    }
    Err(Error::NotConverged {
        solver: "lasso",
        iterations: opts.max_sweeps,
        max_kkt_violation: violation,
    })
}

/// Per-response null-model thresholds `‖Zᵀy_j‖_∞`.
pub fn lasso_lambda_max(data: &Dataset) -> Vec<f64> {
    let g = data.z.transpose() * &data.y;
    g.column_iter().map(|c| c.amax()).collect()
}

/// Cross-validation scores (mean validation MSE per grid point) for one
/// response along a descending path with warm starts.
fn lasso_cv_scores(
    data: &Dataset,
    j: usize,
    grid: &[f64],
    folds: &[Vec<usize>],
    opts: &CdOptions,
) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; grid.len()];
    for val_idx in folds {
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !val_idx.contains(i)).collect();
        let train = data.subset_raw(&train_idx)?.centered()?;
        let val = data.subset_raw(val_idx)?;
        let y: Vec<f64> = train.y.column(j).iter().copied().collect();
        let mut warm: Option<Vec<f64>> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            match lasso_cd(&train.z, &y, lambda, opts, warm.as_deref()) {
                Ok(beta) => {
                    let pred = (&val.z - row_broadcast(&train.z_means, val.n())) * Matrix::from_column_slice(data.p(), 1, &beta);
                    let mse = val
                        .y
                        .column(j)
                        .iter()
                        .zip(pred.iter())
                        .map(|(yv, pv)| (yv - train.y_means[j] - pv).powi(2))
                        .sum::<f64>()
                        / val.n() as f64;
                    totals[g] += mse;
                    warm = Some(beta);
                }
                Err(_) => totals[g] = f64::INFINITY,
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / folds.len() as f64).collect())
}

fn row_broadcast(means: &[f64], rows: usize) -> Matrix {
    Matrix::from_fn(rows, means.len(), |_, j| means[j])
}

/// Per-response lasso, each penalty chosen by k-fold CV on validation MSE.
/// `lambdas = None` uses a per-response default grid.
pub fn lasso_fit_separate(
    data: &Dataset,
    folds: usize,
    lambdas: Option<&[f64]>,
    opts: &CdOptions,
    rng: &mut SimRng,
) -> Result<CoefEstimate> {
    require_centered(data)?;
    check_folds(folds)?;
    if let Some(g) = lambdas {
        check_grid(g)?;
    }
    let assignment = kfold_split(data.n(), folds, rng)?;
    let lmax = lasso_lambda_max(data);
    let mut b = Matrix::zeros(data.p(), data.q());
    let mut hp = Vec::new();
    for j in 0..data.q() {
        let grid = match lambdas {
            Some(g) => descending(g),
            None => log_grid(lmax[j].max(f64::MIN_POSITIVE), 1e-3, DEFAULT_GRID_LEN),
        };
        let scores = lasso_cv_scores(data, j, &grid, &assignment, opts)?;
        let pairs: Vec<(f64, f64)> = grid.iter().copied().zip(scores).collect();
        let lambda = grid[argmin_prefer_larger(&pairs)];
        let y: Vec<f64> = data.y.column(j).iter().copied().collect();
        let beta = lasso_cd(&data.z, &y, lambda, opts, None)?;
        b.set_column(j, &nalgebra::DVector::from_vec(beta));
        hp.push((format!("lambda_{j}"), lambda));
    }
    let hp: Vec<(&str, f64)> = hp.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    CoefEstimate::new(b, "lasso", &hp)
}

fn descending(g: &[f64]) -> Vec<f64> {
    let mut v = g.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn group_kkt(g: &Matrix, b: &Matrix, lambda: f64) -> f64 {
    (0..b.nrows())
        .map(|i| {
            let gi = g.row(i);
            let bi = b.row(i);
            let nb = bi.norm();
            if nb == 0.0 {
                (gi.norm() - lambda).max(0.0)
            } else {
                (gi - bi * (lambda / nb)).norm()
            }
        })
        .fold(0.0, f64::max)
}

/// Block coordinate descent over the rows of `B` for
/// `½‖Y − ZB‖²_F + λ Σ_i ‖B_i‖₂`.
pub fn group_lasso_cd(z: &Matrix, y: &Matrix, lambda: f64, opts: &CdOptions, warm: Option<&Matrix>) -> Result<Matrix> {
    let p = z.ncols();
    let q = y.ncols();
    if z.nrows() != y.nrows() {
        return Err(Error::Dimension("Z and Y row counts differ".into()));
    }
    let norms: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
    let mut b = warm.cloned().unwrap_or_else(|| Matrix::zeros(p, q));
    let mut r = y - z * &b;
    let mut violation = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        for i in 0..p {
            if norms[i] == 0.0 {
                b.row_mut(i).fill(0.0);
                continue;
            }
            let zi = z.column(i);
            let u = zi.transpose() * &r + b.row(i) * norms[i];
            let nu = u.norm();
            let new = if nu > lambda { u * ((1.0 - lambda / nu) / norms[i]) } else { u * 0.0 };
            let delta = &new - b.row(i);
            if delta.amax() != 0.0 {
                r -= &zi * &delta;
                b.set_row(i, &new);
            }
        }
        violation = group_kkt(&(z.transpose() * &r), &b, lambda);
        if violation <= opts.tol {
            return Ok(b);
        }
    }
    Err(Error::NotConverged {
        solver: "group lasso",
        iterations: opts.max_sweeps,
        max_kkt_violation: violation,
    })
}

pub fn group_lasso_lambda_max(data: &Dataset) -> f64 {
    let g = data.z.transpose() * &data.y;
    g.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Row-group lasso with the penalty chosen by k-fold CV on validation MSE.
pub fn group_lasso_fit(
    data: &Dataset,
    folds: usize,
    lambdas: Option<&[f64]>,
    opts: &CdOptions,
    rng: &mut SimRng,
) -> Result<CoefEstimate> {
    require_centered(data)?;
    check_folds(folds)?;
    let grid = match lambdas {
        Some(g) => {
            check_grid(g)?;
            descending(g)
        }
        None => log_grid(group_lasso_lambda_max(data).max(f64::MIN_POSITIVE), 1e-3, DEFAULT_GRID_LEN),
    };
    let assignment = kfold_split(data.n(), folds, rng)?;
    let mut totals = vec![0.0; grid.len()];
    for val_idx in &assignment {
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !val_idx.contains(i)).collect();
        let train = data.subset_raw(&train_idx)?.centered()?;
        let val = data.subset_raw(val_idx)?;
        let mut warm: Option<Matrix> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let score = group_lasso_cd(&train.z, &train.y, lambda, opts, warm.as_ref())
                .and_then(|b| validation_mse(&train, &b, &val).map(|m| (m, b)));
            match score {
                Ok((mse, b)) => {
                    totals[g] += mse;
                    warm = Some(b);
                }
                Err(_) => totals[g] = f64::INFINITY,
            }
        }
    }
    let pairs: Vec<(f64, f64)> = grid.iter().copied().zip(totals).collect();
    let lambda = grid[argmin_prefer_larger(&pairs)];
    let b = group_lasso_cd(&data.z, &data.y, lambda, opts, None)?;
    CoefEstimate::new(b, "group-lasso", &[("lambda", lambda)])
}

#[derive(Debug, Clone)]
pub struct MrceProblem<'a> {
    pub data: &'a Dataset,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MrceOptions {
    /// Relative objective change that ends the alternation.
    pub tol: f64,
    pub max_iter: usize,
    pub cd: CdOptions,
    pub glasso: GlassoOptions,
}

impl Default for MrceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            cd: CdOptions::default(),
            glasso: GlassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MrceFit {
    pub estimate: CoefEstimate,
    pub omega: SpdMatrix,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `tr[(1/n)(Y − ZB)ᵀ(Y − ZB)Ω] − log|Ω| + λ₁‖B‖₁ + λ₂ Σ_{j≠k}|ω_jk|`
pub fn mrce_objective(data: &Dataset, b: &Matrix, omega: &SpdMatrix, lambda1: f64, lambda2: f64) -> f64 {
    let r = &data.y - &data.z * b;
    let s = r.transpose() * r / data.n() as f64;
    glasso_objective(&s, omega, lambda2) + lambda1 * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Coordinate descent over the entries of `B` with `Ω` fixed, maintaining
/// `G = Zᵀ(Y − ZB)`.
fn mrce_b_step(
    gram: &Matrix,
    g: &mut Matrix,
    b: &mut Matrix,
    omega: &Matrix,
    n: usize,
    lambda1: f64,
    opts: &CdOptions,
) -> Result<()> {
    let (p, q) = b.shape();
    let nf = n as f64;
    let kkt = |g: &Matrix, b: &Matrix| -> f64 {
        let go = g * omega * (2.0 / nf);
        let mut worst = 0.0f64;
        for r in 0..p {
            for c in 0..q {
                let v = if b[(r, c)] == 0.0 {
                    (go[(r, c)].abs() - lambda1).max(0.0)
                } else {
                    (go[(r, c)] - lambda1 * b[(r, c)].signum()).abs()
                };
                worst = worst.max(v);
            }
        }
        worst
    };
    let mut violation = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        for c in 0..q {
            let occ = omega[(c, c)];
            for r in 0..p {
                let h = gram[(r, r)] * occ;
                if h == 0.0 {
                    continue;
                }
                let grad: f64 = (0..q).map(|k| g[(r, k)] * omega[(k, c)]).sum();
                let old = b[(r, c)];
                let new = soft_threshold(old * h + grad, nf * lambda1 / 2.0) / h;
                let delta = new - old;
                if delta != 0.0 {
                    b[(r, c)] = new;
                    for t in 0..p {
                        g[(t, c)] -= gram[(t, r)] * delta;
                    }
                }
            }
        }
        violation = kkt(g, b);
        if violation <= opts.tol {
            return Ok(());
        }
    }
    Err(Error::NotConverged {
        solver: "mrce coefficient step",
        iterations: opts.max_sweeps,
        max_kkt_violation: violation,
    })
}

/// Alternating minimization of the MRCE objective, optionally warm-started
/// from `(B, Ω)`.
pub fn mrce_fit(problem: &MrceProblem, opts: &MrceOptions, warm: Option<(&Matrix, &SpdMatrix)>) -> Result<MrceFit> {
    let data = problem.data;
    require_centered(data)?;
    let (l1, l2) = (problem.lambda1, problem.lambda2);
    if !(l1 >= 0.0) || !(l2 >= 0.0) || !l1.is_finite() || !l2.is_finite() {
        return Err(Error::param("lambda", "MRCE penalties must be nonnegative"));
    }
    let (n, p, q) = (data.n(), data.p(), data.q());
    let gram = data.z.transpose() * &data.z;
    let (mut b, mut omega) = match warm {
        Some((b, o)) => (b.clone(), o.clone()),
        None => (Matrix::zeros(p, q), SpdMatrix::identity(q)),
    };
    let mut g = data.z.transpose() * (&data.y - &data.z * &b);
    let mut trace = vec![mrce_objective(data, &b, &omega, l1, l2)];
    let mut warm_glasso: Option<GlassoSolution> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        mrce_b_step(&gram, &mut g, &mut b, omega.as_matrix(), n, l1, &opts.cd)?;
        let r = &data.y - &data.z * &b;
        let s = r.transpose() * r / n as f64;
        let candidate = glasso_fit_warm(&GlassoProblem { s: s.clone(), lambda: l2 }, &opts.glasso, warm_glasso.as_ref())?;
        if glasso_objective(&s, &candidate.omega, l2) <= glasso_objective(&s, &omega, l2) {
            omega = candidate.omega.clone();
        }
        warm_glasso = Some(candidate);
        let f = mrce_objective(data, &b, &omega, l1, l2);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(f);
        if ((prev - f) / prev.abs().max(f64::MIN_POSITIVE)).abs() < opts.tol {
            converged = true;
            break;
        }
    }
    let estimate = CoefEstimate::new(b, "mrce", &[("lambda1", l1), ("lambda2", l2)])?;
    Ok(MrceFit {
        estimate,
        omega,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Default MRCE grids: `λ₁` from the `Ω = I` null threshold `(2/n)‖ZᵀY‖_∞`,
/// `λ₂` from the largest off-diagonal of `YᵀY / n`.
pub fn default_mrce_grids(data: &Dataset, n1: usize, n2: usize) -> (Vec<f64>, Vec<f64>) {
    let l1max = 2.0 / data.n() as f64 * (data.z.transpose() * &data.y).amax();
    let s = data.y.transpose() * &data.y / data.n() as f64;
    let mut l2max = 0.0f64;
    for j in 0..data.q() {
        for k in 0..data.q() {
            if j != k {
                l2max = l2max.max(s[(j, k)].abs());
            }
        }
    }
    if l2max == 0.0 {
        l2max = 1.0;
    }
    (
        log_grid(l1max.max(f64::MIN_POSITIVE), 1e-3, n1),
        log_grid(l2max, 1e-3, n2),
    )
}

/// MRCE with `(λ₁, λ₂)` chosen by k-fold CV on validation MSE.
pub fn mrce_fit_cv(
    data: &Dataset,
    folds: usize,
    lambda1: &[f64],
    lambda2: &[f64],
    opts: &MrceOptions,
    rng: &mut SimRng,
) -> Result<MrceFit> {
    require_centered(data)?;
    check_folds(folds)?;
    check_grid(lambda1)?;
    check_grid(lambda2)?;
    let g1 = descending(lambda1);
    let g2 = descending(lambda2);
    let assignment = kfold_split(data.n(), folds, rng)?;
    let mut totals = vec![vec![0.0; g1.len()]; g2.len()];
    for val_idx in &assignment {
        let train_idx: Vec<usize> = (0..data.n()).filter(|i| !val_idx.contains(i)).collect();
        let train = data.subset_raw(&train_idx)?.centered()?;
        let val = data.subset_raw(val_idx)?;
        for (a, &l2) in g2.iter().enumerate() {
            let mut warm: Option<(Matrix, SpdMatrix)> = None;
            for (c, &l1) in g1.iter().enumerate() {
                let problem = MrceProblem {
                    data: &train,
                    lambda1: l1,
                    lambda2: l2,
                };
                let res = mrce_fit(&problem, opts, warm.as_ref().map(|(b, o)| (b, o)));
                match res.and_then(|f| validation_mse(&train, &f.estimate.b_hat, &val).map(|m| (m, f))) {
                    Ok((mse, f)) => {
                        totals[a][c] += mse;
                        warm = Some((f.estimate.b_hat, f.omega));
                    }
                    Err(_) => totals[a][c] = f64::INFINITY,
                }
            }
        }
    }
    // Ties go to the larger λ₂, then the larger λ₁.
    let mut best = (0, 0);
    for a in 0..g2.len() {
        for c in 0..g1.len() {
            if totals[a][c] < totals[best.0][best.1] {
                best = (a, c);
            }
        }
    }
    let problem = MrceProblem {
        data,
        lambda1: g1[best.1],
        lambda2: g2[best.0],
    };
    mrce_fit(&problem, opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;

    fn orthonormal(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = SimRng::new(seed);
        let a = rng.normal_matrix(n, p);
        nalgebra::QR::new(a).q().columns(0, p).into_owned()
    }

    fn dataset(n: usize, p: usize, q: usize, noise: f64, seed: u64) -> (Dataset, Matrix) {
        let mut rng = SimRng::new(seed);
        let z = rng.normal_matrix(n, p);
        let b = rng.normal_matrix(p, q);
        let y = &z * &b + rng.normal_matrix(n, q) * noise;
        (Dataset::center_columns(z, y).unwrap(), b)
    }

    /// Dataset marked centered without re-centering; for designs built to be exact.
    fn as_centered(z: Matrix, y: Matrix) -> Dataset {
        let mut d = Dataset::raw(z, y).unwrap();
        d.centered = true;
        d.z_means = vec![0.0; d.p()];
        d.y_means = vec![0.0; d.q()];
        d
    }

    #[test]
    fn ols_examples() {
        let (d, _) = dataset(30, 4, 2, 0.0, 1);
        let b = ols_fit(&d).unwrap().b_hat;
        assert!(max_abs_diff(&(&d.z * &b), &d.y) < 1e-10);

        let (d, _) = dataset(30, 4, 2, 1.0, 2);
        let b = ols_fit(&d).unwrap().b_hat;
        let resid = &d.y - &d.z * &b;
        assert!((d.z.transpose() * resid).amax() < 1e-8);

        let z = orthonormal(10, 3, 3);
        let y = SimRng::new(4).normal_matrix(10, 2);
        let d = as_centered(z.clone(), y.clone());
        assert!(max_abs_diff(&ols_fit(&d).unwrap().b_hat, &(z.transpose() * y)) < 1e-10);

        let d = as_centered(Matrix::from_column_slice(2, 1, &[1.0, 2.0]), Matrix::from_column_slice(2, 1, &[2.0, 4.0]));
        assert!((ols_fit(&d).unwrap().b_hat[(0, 0)] - 2.0).abs() < 1e-14);

        let z = Matrix::from_fn(5, 2, |i, _| i as f64);
        assert!(ols_fit(&Dataset::center_columns(z, Matrix::zeros(5, 1)).unwrap()).is_err());
    }

    #[test]
    fn ridge_limits() {
        let (d, _) = dataset(25, 4, 3, 0.5, 5);
        let ols = ols_fit(&d).unwrap().b_hat;
        assert!(max_abs_diff(&ridge_fit_shared(&d, &[1e-10]).unwrap().b_hat, &ols) < 1e-8);
        assert!(ridge_fit_shared(&d, &[1e12]).unwrap().b_hat.amax() < 1e-8);
        assert!(ridge_fit_shared(&d, &[]).is_err());
    }

    #[test]
    fn ridge_loo_matches_refits() {
        let (d, _) = dataset(10, 3, 2, 1.0, 6);
        let lambda = 0.7;
        let closed = ridge_loo_errors(&d, lambda).unwrap();
        let mut explicit = vec![0.0; 2];
        for i in 0..10 {
            let keep: Vec<usize> = (0..10).filter(|&k| k != i).collect();
            let z = d.z.select_rows(&keep);
            let y = d.y.select_rows(&keep);
            let b = (z.transpose() * &z + Matrix::identity(3, 3) * lambda).try_inverse().unwrap() * z.transpose() * y;
            let pred = d.z.row(i) * b;
            for j in 0..2 {
                explicit[j] += (d.y[(i, j)] - pred[j]).powi(2);
            }
        }
        for j in 0..2 {
            assert!((closed[j] - explicit[j]).abs() < 1e-8 * explicit[j].max(1.0));
        }
    }

    #[test]
    fn ridge_variants() {
        let (d1, _) = dataset(20, 3, 1, 1.0, 7);
        let grid = default_ridge_grid(&d1);
        assert_eq!(ridge_fit_shared(&d1, &grid).unwrap().b_hat, ridge_fit_separate(&d1, &grid).unwrap().b_hat);

        let (d, _) = dataset(20, 3, 3, 1.0, 8);
        assert_eq!(ridge_fit_shared(&d, &[0.5]).unwrap().b_hat, ridge_fit_separate(&d, &[0.5]).unwrap().b_hat);

        // One clean response, one dominated by noise.
        let mut rng = SimRng::new(9);
        let z = rng.normal_matrix(60, 5);
        let b = rng.normal_matrix(5, 1);
        let signal = &z * &b;
        let mut y = Matrix::zeros(60, 2);
        y.set_column(0, &(signal.column(0) + rng.normal_matrix(60, 1).column(0) * 0.01));
        y.set_column(1, &(signal.column(0) * 0.01 + rng.normal_matrix(60, 1).column(0) * 10.0));
        let d = Dataset::center_columns(z, y).unwrap();
        let sep = ridge_fit_separate(&d, &default_ridge_grid(&d)).unwrap();
        assert_ne!(sep.hyperparams["lambda_0"], sep.hyperparams["lambda_1"]);
    }

    #[test]
    fn lasso_examples() {
        let opts = CdOptions::default();
        let (d, _) = dataset(30, 5, 1, 1.0, 10);
        let y: Vec<f64> = d.y.column(0).iter().copied().collect();
        let lmax = lasso_lambda_max(&d)[0];
        assert!(lasso_cd(&d.z, &y, lmax, &opts, None).unwrap().iter().all(|b| *b == 0.0));

        let z = orthonormal(20, 4, 11);
        let y: Vec<f64> = SimRng::new(12).normal_matrix(20, 1).iter().copied().collect();
        let zty: Vec<f64> = (z.transpose() * Matrix::from_column_slice(20, 1, &y)).iter().copied().collect();
        let b0 = lasso_cd(&z, &y, 0.0, &opts, None).unwrap();
        let b1 = lasso_cd(&z, &y, 0.3, &opts, None).unwrap();
        for j in 0..4 {
            assert!((b0[j] - zty[j]).abs() < 1e-10);
            assert!((b1[j] - soft_threshold(zty[j], 0.3)).abs() < 1e-10);
        }
    }

    #[test]
    fn lasso_kkt_at_return() {
        let opts = CdOptions::default();
        let mut rng = SimRng::new(13);
        for _ in 0..10 {
            let z = rng.normal_matrix(40, 8);
            let y: Vec<f64> = rng.normal_matrix(40, 1).iter().copied().collect();
            let lambda = 5.0 * rng.uniform();
            let b = lasso_cd(&z, &y, lambda, &opts, None).unwrap();
            let r = Matrix::from_column_slice(40, 1, &y) - &z * Matrix::from_column_slice(8, 1, &b);
            let g: Vec<f64> = (z.transpose() * r).iter().copied().collect();
            assert!(lasso_kkt(&g, &b, lambda) <= 1e-6);
        }
    }

    #[test]
    fn lasso_cv_is_deterministic() {
        let (d, _) = dataset(30, 6, 2, 1.0, 14);
        let a = lasso_fit_separate(&d, 3, None, &CdOptions::default(), &mut SimRng::new(1)).unwrap();
        let b = lasso_fit_separate(&d, 3, None, &CdOptions::default(), &mut SimRng::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(lasso_fit_separate(&d, 1, None, &CdOptions::default(), &mut SimRng::new(1)).is_err());
    }

    #[test]
    fn group_lasso_examples() {
        let opts = CdOptions::default();
        let (d, _) = dataset(30, 5, 3, 1.0, 15);
        let lmax = group_lasso_lambda_max(&d);
        assert_eq!(group_lasso_cd(&d.z, &d.y, lmax, &opts, None).unwrap().amax(), 0.0);
        let ols = ols_fit(&d).unwrap().b_hat;
        assert!(max_abs_diff(&group_lasso_cd(&d.z, &d.y, 0.0, &opts, None).unwrap(), &ols) < 1e-6);

        let z = orthonormal(20, 4, 16);
        let y = SimRng::new(17).normal_matrix(20, 3);
        let zty = z.transpose() * &y;
        let lambda = 0.8;
        let b = group_lasso_cd(&z, &y, lambda, &opts, None).unwrap();
        for i in 0..4 {
            let u = zty.row(i);
            let expected = u * (1.0 - lambda / u.norm()).max(0.0);
            assert!((b.row(i) - expected).amax() < 1e-10);
        }
    }

    #[test]
    fn group_lasso_rows_are_all_or_nothing_and_kkt_holds() {
        let opts = CdOptions::default();
        let (d, _) = dataset(40, 10, 3, 2.0, 18);
        let lambda = 0.3 * group_lasso_lambda_max(&d);
        let b = group_lasso_cd(&d.z, &d.y, lambda, &opts, None).unwrap();
        for row in b.row_iter() {
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            assert!(zeros == 0 || zeros == 3);
        }
        let g = d.z.transpose() * (&d.y - &d.z * &b);
        assert!(group_kkt(&g, &b, lambda) <= 1e-6);
    }

    #[test]
    fn group_lasso_singletons_equal_lasso() {
        let opts = CdOptions::default();
        let (d, _) = dataset(30, 6, 1, 1.0, 19);
        let y: Vec<f64> = d.y.column(0).iter().copied().collect();
        for lambda in [0.1, 1.0, 5.0] {
            let a = lasso_cd(&d.z, &y, lambda, &opts, None).unwrap();
            let b = group_lasso_cd(&d.z, &d.y, lambda, &opts, None).unwrap();
            for j in 0..6 {
                assert!((a[j] - b[(j, 0)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mrce_decoupled_regime() {
        let (d, _) = dataset(40, 4, 3, 1.0, 20);
        let opts = MrceOptions::default();
        let fit = mrce_fit(
            &MrceProblem {
                data: &d,
                lambda1: 1e6,
                lambda2: 0.05,
            },
            &opts,
            None,
        )
        .unwrap();
        assert_eq!(fit.estimate.b_hat.amax(), 0.0);
        let s = d.y.transpose() * &d.y / d.n() as f64;
        let g = crate::glasso::glasso_fit(&GlassoProblem { s, lambda: 0.05 }, &opts.glasso).unwrap();
        assert!(max_abs_diff(fit.omega.as_matrix(), g.omega.as_matrix()) < 1e-5);
    }

    #[test]
    fn mrce_unpenalized_is_mle() {
        let (d, _) = dataset(400, 3, 3, 1.0, 21);
        let fit = mrce_fit(
            &MrceProblem {
                data: &d,
                lambda1: 0.0,
                lambda2: 0.0,
            },
            &MrceOptions::default(),
            None,
        )
        .unwrap();
        let ols = ols_fit(&d).unwrap().b_hat;
        assert!(max_abs_diff(&fit.estimate.b_hat, &ols) < 1e-5);
        let r = &d.y - &d.z * &ols;
        let cov = r.transpose() * r / d.n() as f64;
        let inv = cov.try_inverse().unwrap();
        assert!(max_abs_diff(fit.omega.as_matrix(), &inv) < 1e-5 * inv.amax());
    }

    #[test]
    fn mrce_identity_omega_step_is_separate_lasso() {
        // With Ω = I the coefficient step minimizes (1/n)‖Y − ZB‖² + λ₁‖B‖₁,
        // i.e. per-response lasso at penalty nλ₁/2 in the ½‖·‖² scaling.
        let (d, _) = dataset(30, 5, 2, 1.0, 22);
        let lambda1 = 0.2;
        let gram = d.z.transpose() * &d.z;
        let mut g = d.z.transpose() * &d.y;
        let mut b = Matrix::zeros(5, 2);
        mrce_b_step(&gram, &mut g, &mut b, &Matrix::identity(2, 2), d.n(), lambda1, &CdOptions::default()).unwrap();
        for j in 0..2 {
            let y: Vec<f64> = d.y.column(j).iter().copied().collect();
            let l = lasso_cd(&d.z, &y, d.n() as f64 * lambda1 / 2.0, &CdOptions::default(), None).unwrap();
            for r in 0..5 {
                assert!((l[r] - b[(r, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mrce_objective_is_monotone() {
        for seed in 0..5 {
            let (d, _) = dataset(30, 6, 4, 1.0, 30 + seed);
            let fit = mrce_fit(
                &MrceProblem {
                    data: &d,
                    lambda1: 0.05,
                    lambda2: 0.05,
                },
                &MrceOptions::default(),
                None,
            )
            .unwrap();
            assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        }
    }

    #[test]
    fn mrce_cv_runs() {
        let (d, _) = dataset(30, 4, 3, 1.0, 40);
        let (g1, g2) = default_mrce_grids(&d, 3, 2);
        let a = mrce_fit_cv(&d, 3, &g1, &g2, &MrceOptions::default(), &mut SimRng::new(2)).unwrap();
        let b = mrce_fit_cv(&d, 3, &g1, &g2, &MrceOptions::default(), &mut SimRng::new(2)).unwrap();
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(10.0, 1e-3, 4);
        assert_eq!(g.len(), 4);
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[3] - 0.01).abs() < 1e-12);
        assert_eq!(log_grid(2.0, 0.1, 1), vec![2.0]);
    }
}
