//! L1-penalized Gaussian precision estimation,
//!
//! ```text
//! minimize  tr(S Ω) − log|Ω| + λ Σ_{j≠k} |ω_jk|
//! ```
//!
//! solved by block coordinate descent over the columns of the covariance
//! estimate `W`, each column a lasso subproblem solved by cyclic coordinate
//! descent. Diagonal entries are not penalized, so `W_jj = s_jj` throughout.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SpdMatrix};

#[derive(Debug, Clone)]
pub struct GlassoProblem {
    pub s: Matrix,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GlassoOptions {
    /// Bound on the KKT residual at return.
    pub tol: f64,
    /// Outer sweeps over all columns.
    pub max_iter: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    pub omega: SpdMatrix,
    pub sigma: SpdMatrix,
    pub iterations: usize,
    pub max_kkt_violation: f64,
}

impl GlassoSolution {
    /// Off-diagonal entries of Ω that are exactly zero, counted once per pair.
    pub fn zero_pairs(&self) -> usize {
        let o = self.omega.as_matrix();
        let q = o.nrows();
        (0..q).flat_map(|j| ((j + 1)..q).map(move |k| (j, k))).filter(|&(j, k)| o[(j, k)] == 0.0).count()
    }
}

/// `tr(S Ω) − log|Ω| + λ Σ_{j≠k} |ω_jk|`.
pub fn glasso_objective(s: &Matrix, omega: &SpdMatrix, lambda: f64) -> f64 {
    let o = omega.as_matrix();
    let q = o.nrows();
    let trace = s.component_mul(o).sum();
    let mut l1 = 0.0;
    for j in 0..q {
        for k in 0..q {
            if j != k {
                l1 += o[(j, k)].abs();
            }
        }
    }
    trace - omega.log_det() + lambda * l1
}

/// Largest KKT residual of `(Ω, Σ = Ω⁻¹)` for the penalized problem.
pub fn kkt_violation(s: &Matrix, omega: &Matrix, sigma: &Matrix, lambda: f64) -> f64 {
    let q = s.nrows();
    let mut worst = 0.0f64;
    for j in 0..q {
        worst = worst.max((sigma[(j, j)] - s[(j, j)]).abs());
        for k in 0..q {
            if j == k {
                continue;
            }
            let g = sigma[(j, k)] - s[(j, k)];
            let w = omega[(j, k)];
            let v = if w == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * w.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    worst
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn validate(problem: &GlassoProblem) -> Result<()> {
    let s = &problem.s;
    if !s.is_square() || s.nrows() == 0 {
        return Err(Error::Dimension(format!("covariance must be square, got {}x{}", s.nrows(), s.ncols())));
    }
    if !(problem.lambda >= 0.0) || !problem.lambda.is_finite() {
        return Err(Error::param("lambda", format!("must be nonnegative, got {}", problem.lambda)));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("glasso covariance"));
    }
    if !crate::numerics::is_symmetric(s) {
        return Err(Error::NotSymmetric { asymmetry: (s - s.transpose()).amax() });
    }
    if s.diagonal().iter().any(|d| *d <= 0.0) {
        return Err(Error::param("S", "diagonal entries must be positive"));
    }
    if problem.lambda == 0.0 {
        // Unpenalized problem needs S itself to be invertible.
        SpdMatrix::new(s.clone())?;
    }
    Ok(())
}

pub fn glasso_fit(problem: &GlassoProblem, opts: &GlassoOptions) -> Result<GlassoSolution> {
    glasso_fit_warm(problem, opts, None)
}

/// As [`glasso_fit`], starting from a previous solution when one is given.
pub fn glasso_fit_warm(
    problem: &GlassoProblem,
    opts: &GlassoOptions,
    warm: Option<&GlassoSolution>,
) -> Result<GlassoSolution> {
    validate(problem)?;
    let s = crate::numerics::symmetrize(&problem.s);
    let q = s.nrows();
    let lambda = problem.lambda;

    if q == 1 {
        let omega = SpdMatrix::new(Matrix::from_element(1, 1, 1.0 / s[(0, 0)]))?;
        let sigma = SpdMatrix::new(s.clone())?;
        return Ok(GlassoSolution {
            omega,
            sigma,
            iterations: 0,
            max_kkt_violation: 0.0,
        });
    }

    // beta.column(j) holds the regression of column j on the others (entry j unused).
    let (w, beta) = initial_state(&s, warm);
    match sweeps(&s, w, beta, lambda, opts) {
        // A diagonal or warm start can turn W indefinite after an unpenalized
        // column update; S itself keeps every W₁₁ positive definite.
        Err(e) if diverged(&e) && s.clone().cholesky().is_some() => {
            sweeps(&s, s.clone(), Matrix::zeros(q, q), lambda, opts)
        }
        other => other,
    }
}

fn diverged(e: &Error) -> bool {
    match e {
        Error::NonFinite(_) => true,
        Error::NotConverged { max_kkt_violation, .. } => max_kkt_violation.is_infinite(),
        _ => false,
    }
}

fn sweeps(s: &Matrix, mut w: Matrix, mut beta: Matrix, lambda: f64, opts: &GlassoOptions) -> Result<GlassoSolution> {
    let q = s.nrows();
    let inner_tol = opts.tol * 1e-3;
    let mut last_violation = f64::INFINITY;
    for sweep in 1..=opts.max_iter {
        for j in 0..q {
            solve_column(&mut w, &mut beta, s, j, lambda, inner_tol);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("glasso working covariance"));
        }
        let omega = precision_from_state(&w, &beta);
        let Ok(omega) = SpdMatrix::new(omega) else {
            continue;
        };
        let Ok(sigma) = omega.inverse() else {
            continue;
        };
        last_violation = kkt_violation(s, omega.as_matrix(), sigma.as_matrix(), lambda);
        if last_violation <= opts.tol {
            return Ok(GlassoSolution {
                omega,
                sigma,
                iterations: sweep,
                max_kkt_violation: last_violation,
            });
        }
    }
    Err(Error::NotConverged {
        solver: "graphical lasso",
        iterations: opts.max_iter,
        max_kkt_violation: last_violation,
    })
}

fn initial_state(s: &Matrix, warm: Option<&GlassoSolution>) -> (Matrix, Matrix) {
    let q = s.nrows();
    let cold = || (Matrix::from_diagonal(&s.diagonal()), Matrix::zeros(q, q));
    let Some(warm) = warm.filter(|w| w.omega.dim() == q) else {
        return cold();
    };
    let mut w = warm.sigma.as_matrix().clone();
    for j in 0..q {
        w[(j, j)] = s[(j, j)];
    }
    if w.clone().cholesky().is_none() {
        return cold();
    }
    let o = warm.omega.as_matrix();
    let beta = Matrix::from_fn(q, q, |k, j| if k == j { 0.0 } else { -o[(k, j)] / o[(j, j)] });
    (w, beta)
}

/// Lasso subproblem for column `j`:
/// `min ½ βᵀ W₁₁ β − s₁₂ᵀ β + λ ‖β‖₁`, then `w₁₂ ← W₁₁ β`.
fn solve_column(w: &mut Matrix, beta: &mut Matrix, s: &Matrix, j: usize, lambda: f64, tol: f64) {
    let q = s.nrows();
    let max_passes = 10_000;
    for _ in 0..max_passes {
        let mut max_step = 0.0f64;
        for k in 0..q {
            if k == j {
                continue;
            }
            let mut partial = s[(k, j)];
            for l in 0..q {
                if l != j && l != k {
                    partial -= w[(k, l)] * beta[(l, j)];
                }
            }
            let updated = soft_threshold(partial, lambda) / w[(k, k)];
            let step = (updated - beta[(k, j)]).abs() * w[(k, k)];
            max_step = max_step.max(step);
            beta[(k, j)] = updated;
        }
        if max_step <= tol {
            break;
        }
    }
    for k in 0..q {
        if k == j {
            continue;
        }
        let mut v = 0.0;
        for l in 0..q {
            if l != j {
                v += w[(k, l)] * beta[(l, j)];
            }
        }
        w[(k, j)] = v;
        w[(j, k)] = v;
    }
}

/// `ω_jj = 1 / (w_jj − w₁₂ᵀ β)`, `ω₁₂ = −β ω_jj`, symmetrized.
fn precision_from_state(w: &Matrix, beta: &Matrix) -> Matrix {
    let q = w.nrows();
    let mut cols = Matrix::zeros(q, q);
    for j in 0..q {
        let mut dot = 0.0;
        for k in 0..q {
            if k != j {
                dot += w[(k, j)] * beta[(k, j)];
            }
        }
        let wjj = 1.0 / (w[(j, j)] - dot);
        cols[(j, j)] = wjj;
        for k in 0..q {
            if k != j {
                cols[(k, j)] = -beta[(k, j)] * wjj;
            }
        }
    }
    let mut omega = Matrix::zeros(q, q);
    for j in 0..q {
        omega[(j, j)] = cols[(j, j)];
        for k in (j + 1)..q {
            let v = 0.5 * (cols[(j, k)] + cols[(k, j)]);
            omega[(j, k)] = v;
            omega[(k, j)] = v;
        }
    }
    omega
}

/// Warm-started solutions along a strictly decreasing penalty sequence.
pub fn glasso_path(s: &Matrix, lambdas: &[f64], opts: &GlassoOptions) -> Result<Vec<GlassoSolution>> {
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::param("lambdas", "must be strictly decreasing"));
    }
    let mut out: Vec<GlassoSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let problem = GlassoProblem { s: s.clone(), lambda };
        let sol = glasso_fit_warm(&problem, opts, out.last())?;
        out.push(sol);
    }
    Ok(out)
}
