//! Benchmark harnesses: replicated simulation studies scored by model error
//! and rolling-origin forecasting studies scored by MSE.
//!
//! Every random draw is addressed by `(seed, setting, replication, purpose)`,
//! so results do not depend on the number of worker threads or on the
//! order in which cells finish.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    default_mrce_grids, default_ridge_grid, group_lasso_fit, lasso_fit_separate, mrce_fit_cv, ols_fit, ridge_fit_separate,
    ridge_fit_shared, CdOptions, MrceOptions,
};
use crate::em::{default_lambda_grid, fit_cv, FitConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    build_features, forecast_mse, mean_std, model_error, paired_t_test, rolling_origin, scale_responses, FeatureRecipe,
    MetricReport, RollingOriginPlan,
};
use crate::model::Dataset;
use crate::numerics::{Matrix, SimRng};
use crate::simgen::{simulate_with, ErrorStructure, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mrrce,
    Ols,
    Ridge,
    RidgeSeparate,
    Lasso,
    GroupLasso,
    Mrce,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mrrce,
        Method::Ols,
        Method::Ridge,
        Method::RidgeSeparate,
        Method::Lasso,
        Method::GroupLasso,
        Method::Mrce,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Mrrce => "mrrce",
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::RidgeSeparate => "ridge-separate",
            Method::Lasso => "lasso",
            Method::GroupLasso => "group-lasso",
            Method::Mrce => "mrce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::param("method", format!("unknown method '{s}'")))
    }

    fn stream(self) -> u64 {
        1 + self as u64
    }
}

/// Tuning choices shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tuning {
    /// Folds for the MrRCE `λ_ω` search.
    pub mrrce_folds: usize,
    pub mrrce_grid_len: usize,
    pub lasso_folds: usize,
    pub group_lasso_folds: usize,
    pub mrce_folds: usize,
    pub mrce_grid: (usize, usize),
    pub em_tol: f64,
    pub em_max_iter: usize,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            mrrce_folds: 3,
            mrrce_grid_len: 8,
            lasso_folds: 3,
            group_lasso_folds: 3,
            mrce_folds: 5,
            mrce_grid: (8, 6),
            em_tol: 1e-4,
            em_max_iter: 200,
        }
    }
}

impl Tuning {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tuning.mrrce_folds", self.mrrce_folds),
            ("tuning.lasso_folds", self.lasso_folds),
            ("tuning.group_lasso_folds", self.group_lasso_folds),
            ("tuning.mrce_folds", self.mrce_folds),
        ] {
            if v < 2 {
                return Err(Error::param(name, "need at least two folds"));
            }
        }
        if self.mrrce_grid_len == 0 || self.mrce_grid.0 == 0 || self.mrce_grid.1 == 0 {
            return Err(Error::param("tuning", "grid lengths must be positive"));
        }
        if !(self.em_tol > 0.0) || self.em_max_iter == 0 {
            return Err(Error::param("tuning.em_tol", "EM tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Fits `method` to centered data and returns its `p x q` coefficient estimate.
pub fn fit_method(method: Method, data: &Dataset, tuning: &Tuning, rng: &mut SimRng) -> Result<Matrix> {
    let data = data.centered()?;
    let b = match method {
        Method::Mrrce => {
            let grid = default_lambda_grid(&data, tuning.mrrce_grid_len)?;
            let config = FitConfig {
                tol: tuning.em_tol,
                max_iter: tuning.em_max_iter,
                ..FitConfig::default()
            };
            fit_cv(&data, &grid, tuning.mrrce_folds, &config, rng)?.0.gamma_star
        }
        Method::Ols => ols_fit(&data)?.b_hat,
        Method::Ridge => ridge_fit_shared(&data, &default_ridge_grid(&data))?.b_hat,
        Method::RidgeSeparate => ridge_fit_separate(&data, &default_ridge_grid(&data))?.b_hat,
        Method::Lasso => lasso_fit_separate(&data, tuning.lasso_folds, None, &CdOptions::default(), rng)?.b_hat,
        Method::GroupLasso => group_lasso_fit(&data, tuning.group_lasso_folds, None, &CdOptions::default(), rng)?.b_hat,
        Method::Mrce => {
            let (g1, g2) = default_mrce_grids(&data, tuning.mrce_grid.0, tuning.mrce_grid.1);
            mrce_fit_cv(&data, tuning.mrce_folds, &g1, &g2, &MrceOptions::default(), rng)?
                .estimate
                .b_hat
        }
    };
    Ok(b)
}

fn default_roster() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn check_roster(roster: &[Method]) -> Result<()> {
    if roster.is_empty() {
        return Err(Error::param("roster", "at least one method is required"));
    }
    let mut seen = roster.to_vec();
    seen.sort();
    seen.dedup();
    if seen.len() != roster.len() {
        return Err(Error::param("roster", "methods must not repeat"));
    }
    Ok(())
}

/// A replicated simulation study over a grid of coefficient correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimStudyConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub rhos: Vec<f64>,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub s_g: f64,
    pub rho_z: f64,
    pub error_structure: ErrorStructure,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_roster")]
    pub roster: Vec<Method>,
    #[serde(default)]
    pub tuning: Tuning,
}

fn one() -> f64 {
    1.0
}

impl SimStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rhos.is_empty() {
            return Err(Error::param("rhos", "at least one value is required"));
        }
        if self.replications == 0 {
            return Err(Error::param("replications", "must be positive"));
        }
        check_roster(&self.roster)?;
        self.tuning.validate()?;
        for &rho in &self.rhos {
            self.sim_config(rho, 0).validate()?;
        }
        Ok(())
    }

    pub fn sim_config(&self, rho: f64, seed: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            p: self.p,
            q: self.q,
            rho,
            sigma: self.sigma,
            s: self.s,
            s_g: self.s_g,
            rho_z: self.rho_z,
            error_structure: self.error_structure,
            seed,
        }
    }
}

/// One (setting, method) row of a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub report: MetricReport,
    pub failures: usize,
    /// Paired t statistic and two-sided p-value against MrRCE, over the
    /// replications where both methods succeeded.
    pub t_vs_mrrce: Option<f64>,
    pub p_vs_mrrce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingReport {
    pub label: String,
    pub rho: Option<f64>,
    /// Sorted by ascending mean.
    pub methods: Vec<MethodRow>,
}

impl SettingReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.methods.iter().find(|r| r.report.method == method.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub metric: String,
    pub config_hash: String,
    pub settings: Vec<SettingReport>,
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::param("config", e.to_string()))?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn paired_finite(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip()
}

fn setting_report(label: String, rho: Option<f64>, roster: &[Method], values: Vec<Vec<f64>>) -> SettingReport {
    let mrrce = roster.iter().position(|m| *m == Method::Mrrce).map(|i| values[i].clone());
    let mut methods: Vec<MethodRow> = roster
        .iter()
        .zip(values)
        .map(|(m, v)| {
            let failures = v.iter().filter(|x| !x.is_finite()).count();
            let (t, p) = match (&mrrce, *m) {
                (Some(base), other) if other != Method::Mrrce => {
                    let (a, b) = paired_finite(&v, base);
                    match paired_t_test(&a, &b) {
                        Ok((t, p)) => (Some(t), Some(p)),
                        Err(_) => (None, None),
                    }
                }
                _ => (None, None),
            };
            MethodRow {
                report: MetricReport::new(m.label(), v),
                failures,
                t_vs_mrrce: t,
                p_vs_mrrce: p,
            }
        })
        .collect();
    methods.sort_by(|a, b| {
        let key = |r: &MethodRow| if r.report.mean.is_nan() { f64::INFINITY } else { r.report.mean };
        key(a).total_cmp(&key(b)).then_with(|| a.report.method.cmp(&b.report.method))
    });
    SettingReport { label, rho, methods }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))
}

/// Runs the simulation study on `jobs` worker threads.
pub fn run_sim_study(config: &SimStudyConfig, jobs: usize) -> Result<BenchmarkReport> {
    config.validate()?;
    let hash = config_hash(config)?;
    let cells: Vec<(usize, usize)> = (0..config.rhos.len())
        .flat_map(|a| (0..config.replications).map(move |r| (a, r)))
        .collect();
    let run_cell = |&(a, r): &(usize, usize)| -> Vec<f64> {
        let mut data_rng = SimRng::for_path(config.seed, &[a as u64, r as u64, 0]);
        let Ok(inst) = simulate_with(&config.sim_config(config.rhos[a], config.seed), &mut data_rng) else {
            return vec![f64::NAN; config.roster.len()];
        };
        config
            .roster
            .iter()
            .map(|&m| {
                let mut rng = SimRng::for_path(config.seed, &[a as u64, r as u64, m.stream()]);
                fit_method(m, &inst.data, &config.tuning, &mut rng)
                    .and_then(|b| model_error(&inst.gamma_true, &b, &inst.sigma_z))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    let results: Vec<Vec<f64>> = pool(jobs)?.install(|| cells.par_iter().map(run_cell).collect());

    let settings = config
        .rhos
        .iter()
        .enumerate()
        .map(|(a, &rho)| {
            let values: Vec<Vec<f64>> = (0..config.roster.len())
                .map(|m| (0..config.replications).map(|r| results[a * config.replications + r][m]).collect())
                .collect();
            setting_report(format!("rho={rho}"), Some(rho), &config.roster, values)
        })
        .collect();
    Ok(BenchmarkReport {
        metric: "ME".into(),
        config_hash: hash,
        settings,
    })
}

/// A rolling-origin forecasting study on a daily multi-response series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsStudyConfig {
    pub plan: RollingOriginPlan,
    #[serde(default = "default_ts_roster")]
    pub roster: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    /// Standardize features with training-window statistics before fitting.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub tuning: Tuning,
}

fn default_ts_roster() -> Vec<Method> {
    vec![Method::Mrrce, Method::Ridge, Method::RidgeSeparate]
}

fn yes() -> bool {
    true
}

fn standardize_with(train: &Matrix, other: &Matrix) -> (Matrix, Matrix) {
    let n = train.nrows() as f64;
    let mut a = train.clone();
    let mut b = other.clone();
    for j in 0..train.ncols() {
        let mean = train.column(j).sum() / n;
        let sd = (train.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 1e-12 { sd } else { 1.0 };
        for v in a.column_mut(j).iter_mut() {
            *v = (*v - mean) / scale;
        }
        for v in b.column_mut(j).iter_mut() {
            *v = (*v - mean) / scale;
        }
    }
    (a, b)
}

/// Runs the rolling-origin study. Responses are divided by their column
/// maxima over the full history before any fitting.
pub fn run_ts_study(y: &Matrix, recipe: &FeatureRecipe, config: &TsStudyConfig, jobs: usize) -> Result<BenchmarkReport> {
    check_roster(&config.roster)?;
    config.tuning.validate()?;
    let n = y.nrows();
    let windows = rolling_origin(&config.plan, n)?;
    let (y_scaled, _) = scale_responses(y)?;
    let t: Vec<usize> = (0..n).collect();
    let z = build_features(recipe, &t)?;
    let hash = config_hash(&(config, recipe))?;

    let run_window = |k: usize| -> Vec<f64> {
        let w = &windows[k];
        let z_train = z.select_rows(&w.train);
        let z_test = z.select_rows(&w.test);
        let (z_train, z_test) = if config.standardize {
            standardize_with(&z_train, &z_test)
        } else {
            (z_train, z_test)
        };
        let y_train = y_scaled.select_rows(&w.train);
        let y_test = y_scaled.select_rows(&w.test);
        let Ok(data) = Dataset::center_columns(z_train, y_train) else {
            return vec![f64::NAN; config.roster.len()];
        };
        config
            .roster
            .iter()
            .map(|&m| {
                let mut rng = SimRng::for_path(config.seed, &[0, k as u64, m.stream()]);
                fit_method(m, &data, &config.tuning, &mut rng)
                    .and_then(|b| data.predict(&b, &z_test))
                    .and_then(|pred| forecast_mse(&y_test, &pred))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    let results: Vec<Vec<f64>> = pool(jobs)?.install(|| (0..windows.len()).into_par_iter().map(run_window).collect());
    let values: Vec<Vec<f64>> = (0..config.roster.len())
        .map(|m| results.iter().map(|r| r[m]).collect())
        .collect();
    Ok(BenchmarkReport {
        metric: "MSE".into(),
        config_hash: hash,
        settings: vec![setting_report("rolling-origin".into(), None, &config.roster, values)],
    })
}

/// Full-precision scientific notation (17 significant digits).
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

impl BenchmarkReport {
    /// One row per (setting, method): summary statistics and the comparison with MrRCE.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_hash,setting,method,metric,mean,std,replications,failures,t_vs_mrrce,p_vs_mrrce\n");
        for s in &self.settings {
            for r in &s.methods {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    self.config_hash,
                    s.label,
                    r.report.method,
                    self.metric,
                    fmt_num(r.report.mean),
                    fmt_num(r.report.std),
                    r.report.values.len(),
                    r.failures,
                    fmt_opt(r.t_vs_mrrce),
                    fmt_opt(r.p_vs_mrrce)
                );
            }
        }
        out
    }

    /// Long-format per-replication values, from which every p-value can be recomputed.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("config_hash,setting,method,replication,value\n");
        for s in &self.settings {
            for r in &s.methods {
                for (i, v) in r.report.values.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{},{},{}", self.config_hash, s.label, r.report.method, i, fmt_num(*v));
                }
            }
        }
        out
    }

    /// Mean metric per setting (rows) and method (columns), for plotting
    /// against ρ. Methods appear in the order of the first setting.
    pub fn plot_csv(&self) -> String {
        let Some(first) = self.settings.first() else {
            return String::new();
        };
        let mut methods: Vec<&str> = first.methods.iter().map(|r| r.report.method.as_str()).collect();
        methods.sort_unstable();
        let mut out = format!("config_hash,rho,{}\n", methods.join(","));
        for s in &self.settings {
            let cells: Vec<String> = methods
                .iter()
                .map(|m| {
                    s.methods
                        .iter()
                        .find(|r| r.report.method == *m)
                        .map(|r| fmt_num(r.report.mean))
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(out, "{},{},{}", self.config_hash, fmt_opt(s.rho), cells.join(","));
        }
        out
    }
}

/// Recomputes `(mean, std)` from stored values.
pub fn recompute_summary(row: &MethodRow) -> (f64, f64) {
    mean_std(&row.report.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(roster: Vec<Method>) -> SimStudyConfig {
        SimStudyConfig {
            n: 30,
            p: 5,
            q: 3,
            rhos: vec![0.0, 0.5],
            sigma: 1.0,
            s: 0.0,
            s_g: 0.0,
            rho_z: 0.5,
            error_structure: ErrorStructure::Identity,
            replications: 4,
            seed: 7,
            roster,
            tuning: Tuning {
                mrce_grid: (3, 2),
                mrrce_grid_len: 4,
                ..Tuning::default()
            },
        }
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }

    #[test]
    fn sim_study_shape_and_determinism() {
        let cfg = tiny(Method::ALL.to_vec());
        let a = run_sim_study(&cfg, 1).unwrap();
        let b = run_sim_study(&cfg, 2).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.replications_csv(), b.replications_csv());
        assert_eq!(a.settings.len(), 2);
        for s in &a.settings {
            assert_eq!(s.methods.len(), 7);
            assert!(s.methods.windows(2).all(|w| w[0].report.mean <= w[1].report.mean));
            for r in &s.methods {
                assert_eq!(r.report.values.len(), 4);
                let (m, sd) = recompute_summary(r);
                assert!((m - r.report.mean).abs() <= 1e-12 * m.abs().max(1.0));
                assert!((sd - r.report.std).abs() <= 1e-12 * sd.abs().max(1.0));
                if r.report.method != "mrrce" {
                    let base = &s.row(Method::Mrrce).unwrap().report.values;
                    let (t, p) = paired_t_test(&r.report.values, base).unwrap();
                    assert_eq!(Some(t), r.t_vs_mrrce);
                    assert_eq!(Some(p), r.p_vs_mrrce);
                }
            }
        }
        let csv = a.to_csv();
        assert!(csv.lines().skip(1).all(|l| l.starts_with(&a.config_hash)));
    }

    #[test]
    fn noiseless_ols_has_zero_error() {
        let mut cfg = tiny(vec![Method::Ols]);
        cfg.error_structure = ErrorStructure::Identity;
        // Scale the coefficients up so that the unit noise is negligible.
        cfg.sigma = 1e8;
        let r = run_sim_study(&cfg, 1).unwrap();
        for s in &r.settings {
            let row = s.row(Method::Ols).unwrap();
            assert!(row.report.mean / 1e16 < 1e-6);
        }
    }

    #[test]
    fn config_rejections() {
        let mut cfg = tiny(vec![Method::Ols, Method::Ols]);
        assert!(run_sim_study(&cfg, 1).is_err());
        cfg.roster = vec![Method::Ols];
        cfg.rhos = vec![1.5];
        assert!(run_sim_study(&cfg, 1).is_err());
        let json = r#"{"n":5,"p":2,"q":2,"rhos":[0.0],"rho_z":0.0,"error_structure":{"kind":"identity"},"replications":1,"bogus":1}"#;
        assert!(serde_json::from_str::<SimStudyConfig>(json).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = tiny(vec![Method::Ols]);
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.seed += 1;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 16);
    }
}
