use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use mrrce::baselines::{
    default_mrce_grids, default_ridge_grid, group_lasso_fit, lasso_fit_separate, mrce_fit_cv, ols_fit, ridge_fit_separate,
    ridge_fit_shared, CdOptions, MrceOptions,
};
use mrrce::em::{default_lambda_grid, fit_cv, FitConfig};
use mrrce::evaluation::FeatureRecipe;
use mrrce::study::{config_hash, run_sim_study, run_ts_study, BenchmarkReport, Method};
use mrrce::{simulate as draw, Dataset, Matrix, SimRng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{load, resolve, BenchSimConfig, BenchTsConfig, FitFileConfig, PredictFileConfig, SimulateConfig};
use crate::io::{matrix_rows, read_matrix, read_text, write_json, write_matrix, write_text};
use crate::{CliError, Common};

fn prepare_out(c: &Common) -> Result<(), CliError> {
    fs::create_dir_all(&c.out).map_err(|e| CliError::io(&c.out, e))
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let inst = draw(&cfg)?;
    prepare_out(c)?;
    write_matrix(&c.out.join("Z.csv"), &inst.data.z, "z")?;
    write_matrix(&c.out.join("Y.csv"), &inst.data.y, "y")?;
    write_matrix(&c.out.join("gamma_true.csv"), &inst.gamma_true, "y")?;
    write_json(
        &c.out.join("meta.json"),
        &json!({
            "seed": cfg.seed,
            "config": cfg,
            "config_hash": config_hash(&cfg)?,
            "error_cov": matrix_rows(inst.error_cov.as_matrix()),
        }),
    )
}

/// Written next to the coefficients so that `predict` can undo the centering.
#[derive(Debug, Serialize, Deserialize)]
struct FitReport {
    method: Method,
    coefficients: String,
    n: usize,
    p: usize,
    q: usize,
    z_means: Vec<f64>,
    y_means: Vec<f64>,
    hyperparams: BTreeMap<String, f64>,
    config_hash: String,
    seed: u64,
}

fn check_grid_for(method: Method, lambdas: &Option<Vec<f64>>) -> Result<(), CliError> {
    match (method, lambdas) {
        (Method::Ols | Method::Mrce, Some(_)) => Err(CliError::Schema(format!(
            "lambdas: not used by method '{}'",
            method.label()
        ))),
        (_, Some(g)) if g.is_empty() => Err(CliError::Schema("lambdas: grid is empty".into())),
        _ => Ok(()),
    }
}

pub fn fit(c: &Common) -> Result<(), CliError> {
    let mut cfg: FitFileConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    check_grid_for(cfg.method, &cfg.lambdas)?;
    let z = read_matrix(&resolve(&c.config, &cfg.z))?;
    let y = read_matrix(&resolve(&c.config, &cfg.y))?;
    if z.nrows() != y.nrows() {
        return Err(CliError::Schema(format!("Z has {} rows but Y has {}", z.nrows(), y.nrows())));
    }
    let data = Dataset::center_columns(z, y)?;
    let mut rng = SimRng::new(cfg.seed);
    let t = &cfg.tuning;
    prepare_out(c)?;

    let (b, hyperparams, name) = match cfg.method {
        Method::Mrrce => {
            let grid = match &cfg.lambdas {
                Some(g) => g.clone(),
                None => default_lambda_grid(&data, t.mrrce_grid_len)?,
            };
            let config = FitConfig {
                tol: t.em_tol,
                max_iter: t.em_max_iter,
                ..FitConfig::default()
            };
            let (res, sel) = fit_cv(&data, &grid, t.mrrce_folds, &config, &mut rng)?;
            write_json(
                &c.out.join("theta.json"),
                &json!({
                    "omega": matrix_rows(res.theta_hat.omega.as_matrix()),
                    "omega_transformed": matrix_rows(res.omega_transformed.as_matrix()),
                    "sigma2": res.theta_hat.sigma2,
                    "rho": res.theta_hat.rho,
                    "lambda_omega": sel.lambda,
                    "iterations": res.iterations,
                    "converged": res.converged,
                    "objective_trace": res.objective_trace,
                    "cv_table": sel.table,
                }),
            )?;
            let hp = BTreeMap::from([("lambda_omega".to_string(), sel.lambda)]);
            (res.gamma_star, hp, "gamma_star.csv")
        }
        other => {
            let est = match other {
                Method::Ols => ols_fit(&data)?,
                Method::Ridge => ridge_fit_shared(&data, cfg.lambdas.as_deref().unwrap_or(&default_ridge_grid(&data)))?,
                Method::RidgeSeparate => {
                    ridge_fit_separate(&data, cfg.lambdas.as_deref().unwrap_or(&default_ridge_grid(&data)))?
                }
                Method::Lasso => lasso_fit_separate(&data, t.lasso_folds, cfg.lambdas.as_deref(), &CdOptions::default(), &mut rng)?,
                Method::GroupLasso => {
                    group_lasso_fit(&data, t.group_lasso_folds, cfg.lambdas.as_deref(), &CdOptions::default(), &mut rng)?
                }
                Method::Mrce => {
                    let (g1, g2) = default_mrce_grids(&data, t.mrce_grid.0, t.mrce_grid.1);
                    mrce_fit_cv(&data, t.mrce_folds, &g1, &g2, &MrceOptions::default(), &mut rng)?.estimate
                }
                Method::Mrrce => unreachable!("handled above"),
            };
            (est.b_hat, est.hyperparams, "B_hat.csv")
        }
    };
    write_matrix(&c.out.join(name), &b, "y")?;
    let report = FitReport {
        method: cfg.method,
        coefficients: name.to_string(),
        n: data.n(),
        p: data.p(),
        q: data.q(),
        z_means: data.z_means.clone(),
        y_means: data.y_means.clone(),
        hyperparams,
        config_hash: config_hash(&cfg)?,
        seed: cfg.seed,
    };
    write_json(&c.out.join("fit_report.json"), &report)
}

pub fn predict(c: &Common) -> Result<(), CliError> {
    let cfg: PredictFileConfig = load(&c.config)?;
    let model_dir = resolve(&c.config, &cfg.model);
    let report_path = model_dir.join("fit_report.json");
    let report: FitReport = serde_json::from_str(&read_text(&report_path)?)
        .map_err(|e| CliError::Schema(format!("{}: {e}", report_path.display())))?;
    let b = read_matrix(&model_dir.join(&report.coefficients))?;
    let z_new = read_matrix(&resolve(&c.config, &cfg.z))?;
    if b.shape() != (report.p, report.q) || z_new.ncols() != report.p {
        return Err(CliError::Schema(format!(
            "model is {}x{} but new data has {} predictor columns",
            report.p,
            report.q,
            z_new.ncols()
        )));
    }
    let fitted = Dataset {
        z: Matrix::zeros(0, report.p),
        y: Matrix::zeros(0, report.q),
        z_means: report.z_means,
        y_means: report.y_means,
        centered: true,
    };
    let pred = fitted.predict(&b, &z_new)?;
    prepare_out(c)?;
    write_matrix(&c.out.join("predictions.csv"), &pred, "y")
}

fn write_report(c: &Common, report: &BenchmarkReport, seconds: f64, plot: bool) -> Result<(), CliError> {
    prepare_out(c)?;
    write_text(&c.out.join("report.csv"), &report.to_csv())?;
    write_text(&c.out.join("replications.csv"), &report.replications_csv())?;
    if plot {
        write_text(&c.out.join("plot_data.csv"), &report.plot_csv())?;
    }
    write_json(&c.out.join("report.json"), report)?;
    // Kept apart from the report so that reruns compare byte for byte.
    write_json(
        &c.out.join("timing.json"),
        &json!({ "config_hash": report.config_hash, "wall_seconds": seconds, "jobs": c.jobs }),
    )
}

pub fn bench_sim(c: &Common) -> Result<(), CliError> {
    let mut cfg: BenchSimConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let start = Instant::now();
    let report = run_sim_study(&cfg, c.jobs)?;
    write_report(c, &report, start.elapsed().as_secs_f64(), true)
}

pub fn bench_ts(c: &Common) -> Result<(), CliError> {
    let mut cfg: BenchTsConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let y = read_matrix(&resolve(&c.config, &cfg.data))?;
    let recipe = cfg
        .recipe
        .clone()
        .unwrap_or_else(|| FeatureRecipe::nyc_default(cfg.start_date, y.nrows()));
    let start = Instant::now();
    let report = run_ts_study(&y, &recipe, &cfg.study(), c.jobs)?;
    write_report(c, &report, start.elapsed().as_secs_f64(), false)
}
