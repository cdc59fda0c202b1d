//! Error metrics, significance tests, resampling splitters and time-series
//! feature construction.

use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SimRng, SpdMatrix};

/// `tr[(Γ − Γ̂)ᵀ Σ_Z (Γ − Γ̂)]`
pub fn model_error(gamma_true: &Matrix, gamma_hat: &Matrix, sigma_z: &SpdMatrix) -> Result<f64> {
    if gamma_true.shape() != gamma_hat.shape() || sigma_z.dim() != gamma_true.nrows() {
        return Err(Error::Dimension(format!(
            "model error: Γ {:?}, Γ̂ {:?}, Σ_Z {}",
            gamma_true.shape(),
            gamma_hat.shape(),
            sigma_z.dim()
        )));
    }
    let d = gamma_true - gamma_hat;
    let v = (d.transpose() * sigma_z.as_matrix() * &d).trace();
    Ok(v.max(0.0))
}

/// `(1/(n_test q)) ΣΣ (y − ŷ)²`
pub fn forecast_mse(y_true: &Matrix, y_pred: &Matrix) -> Result<f64> {
    if y_true.shape() != y_pred.shape() {
        return Err(Error::Dimension(format!(
            "forecast window {:?} vs prediction {:?}",
            y_true.shape(),
            y_pred.shape()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Dimension("empty forecast window".into()));
    }
    Ok((y_true - y_pred).map(|v| v * v).sum() / (y_true.nrows() * y_true.ncols()) as f64)
}

/// Paired two-sided t-test on `d = a − b`.
///
/// Conventions when the differences have zero spread: all zero gives
/// `(0, 1)`; a constant nonzero difference gives `(±∞, 0)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::param("samples", "need at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired differences"));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 || sd <= 1e-15 * mean.abs() {
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::param("df", e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok((t, p))
}

/// Per-method summary of replication values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricReport {
    /// Summary over the finite values; `std` is the sample standard deviation.
    pub fn new(method: impl Into<String>, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self {
            method: method.into(),
            values,
            mean,
            std,
        }
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = ok.iter().sum::<f64>() / ok.len() as f64;
    let s = if ok.len() > 1 {
        (ok.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
/// Each fold lists its indices in ascending order.
pub fn kfold_split(n: usize, k: usize, rng: &mut SimRng) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::param("folds", format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in perm.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn loo_split(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingOriginPlan {
    pub initial_train: usize,
    pub step: usize,
    pub horizon: usize,
    pub num_cutoffs: usize,
}

impl RollingOriginPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.initial_train == 0 || self.horizon == 0 || self.num_cutoffs == 0 {
            return Err(Error::param("plan", "initial_train, horizon and num_cutoffs must be positive"));
        }
        if self.num_cutoffs > 1 && self.step == 0 {
            return Err(Error::param("plan.step", "must be positive with several cutoffs"));
        }
        let end = self.initial_train + (self.num_cutoffs - 1) * self.step + self.horizon;
        if end > n {
            return Err(Error::param(
                "plan",
                format!("last test window ends at {end}, beyond the {n} available rows"),
            ));
        }
        Ok(())
    }
}

/// A train/test split of a time-ordered sample (0-based row indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Expanding-window splits: cutoff `k` trains on rows `0..initial + k·step`
/// and tests on the next `horizon` rows.
pub fn rolling_origin(plan: &RollingOriginPlan, n: usize) -> Result<Vec<Window>> {
    plan.validate(n)?;
    Ok((0..plan.num_cutoffs)
        .map(|k| {
            let end = plan.initial_train + k * plan.step;
            Window {
                train: (0..end).collect(),
                test: (end..end + plan.horizon).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    Fourier { period: f64, order: usize },
    Holiday { name: String, days: BTreeSet<usize> },
    PiecewiseTrend { changepoints: Vec<f64> },
    /// Category codes per time index; level `0` is the dropped reference.
    OneHot { name: String, codes: Vec<usize>, levels: usize },
}

impl FeatureSpec {
    pub fn width(&self) -> usize {
        match self {
            FeatureSpec::Fourier { order, .. } => 2 * order,
            FeatureSpec::Holiday { .. } => 1,
            FeatureSpec::PiecewiseTrend { changepoints } => 1 + changepoints.len(),
            FeatureSpec::OneHot { levels, .. } => levels.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecipe {
    pub specs: Vec<FeatureSpec>,
}

impl FeatureRecipe {
    pub fn width(&self) -> usize {
        self.specs.iter().map(FeatureSpec::width).sum()
    }

    /// Weekly and yearly seasonality, ten fixed US federal holidays, and a
    /// piecewise trend with changepoints spread evenly over the first 80% of
    /// the history. Day 0 is `start`.
    pub fn nyc_default(start: NaiveDate, n_days: usize) -> Self {
        let mut specs = vec![
            FeatureSpec::Fourier { period: 7.0, order: 3 },
            FeatureSpec::Fourier {
                period: 365.25,
                order: 10,
            },
        ];
        for (name, days) in us_holidays(start, n_days) {
            specs.push(FeatureSpec::Holiday { name, days });
        }
        let n_cp = 31;
        let span = 0.8 * n_days as f64;
        let changepoints = (1..=n_cp).map(|i| (span * i as f64 / (n_cp + 1) as f64).round()).collect();
        specs.push(FeatureSpec::PiecewiseTrend { changepoints });
        Self { specs }
    }
}

fn nth_weekday(year: i32, month: u32, weekday: Weekday, nth: u8) -> Option<NaiveDate> {
    NaiveDate::from_weekday_of_month_opt(year, month, weekday, nth)
}

fn last_weekday(year: i32, month: u32, weekday: Weekday) -> Option<NaiveDate> {
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    let mut d = next - Duration::days(1);
    while d.weekday() != weekday {
        d -= Duration::days(1);
    }
    Some(d)
}

/// Day offsets of ten US federal holidays inside `[start, start + n_days)`.
fn us_holidays(start: NaiveDate, n_days: usize) -> Vec<(String, BTreeSet<usize>)> {
    type Rule = fn(i32) -> Option<NaiveDate>;
    let rules: [(&str, Rule); 10] = [
        ("new_year", |y| NaiveDate::from_ymd_opt(y, 1, 1)),
        ("mlk_day", |y| nth_weekday(y, 1, Weekday::Mon, 3)),
        ("presidents_day", |y| nth_weekday(y, 2, Weekday::Mon, 3)),
        ("memorial_day", |y| last_weekday(y, 5, Weekday::Mon)),
        ("independence_day", |y| NaiveDate::from_ymd_opt(y, 7, 4)),
        ("labor_day", |y| nth_weekday(y, 9, Weekday::Mon, 1)),
        ("columbus_day", |y| nth_weekday(y, 10, Weekday::Mon, 2)),
        ("veterans_day", |y| NaiveDate::from_ymd_opt(y, 11, 11)),
        ("thanksgiving", |y| nth_weekday(y, 11, Weekday::Thu, 4)),
        ("christmas", |y| NaiveDate::from_ymd_opt(y, 12, 25)),
    ];
    let end = start + Duration::days(n_days as i64);
    rules
        .iter()
        .map(|(name, rule)| {
            let days = (start.year()..=end.year())
                .filter_map(rule)
                .filter(|d| *d >= start && *d < end)
                .map(|d| (d - start).num_days() as usize)
                .collect();
            (name.to_string(), days)
        })
        .collect()
}

/// Design matrix with one row per entry of `t`; columns follow recipe order.
pub fn build_features(recipe: &FeatureRecipe, t: &[usize]) -> Result<Matrix> {
    let mut out = Matrix::zeros(t.len(), recipe.width());
    let mut col = 0;
    for spec in &recipe.specs {
        match spec {
            FeatureSpec::Fourier { period, order } => {
                if !(*period > 0.0) {
                    return Err(Error::param("fourier.period", "must be positive"));
                }
                for (r, &ti) in t.iter().enumerate() {
                    for k in 1..=*order {
                        let arg = 2.0 * std::f64::consts::PI * k as f64 * ti as f64 / period;
                        out[(r, col + 2 * (k - 1))] = arg.cos();
                        out[(r, col + 2 * (k - 1) + 1)] = arg.sin();
                    }
                }
            }
            FeatureSpec::Holiday { days, .. } => {
                for (r, ti) in t.iter().enumerate() {
                    out[(r, col)] = if days.contains(ti) { 1.0 } else { 0.0 };
                }
            }
            FeatureSpec::PiecewiseTrend { changepoints } => {
                for (r, &ti) in t.iter().enumerate() {
                    let x = ti as f64;
                    out[(r, col)] = x;
                    for (c, cp) in changepoints.iter().enumerate() {
                        out[(r, col + 1 + c)] = (x - cp).max(0.0);
                    }
                }
            }
            FeatureSpec::OneHot { name, codes, levels } => {
                for (r, &ti) in t.iter().enumerate() {
                    let code = *codes
                        .get(ti)
                        .ok_or_else(|| Error::param(name.clone(), format!("no category for time index {ti}")))?;
                    if code >= *levels {
                        return Err(Error::param(name.clone(), format!("code {code} outside {levels} levels")));
                    }
                    if code > 0 {
                        out[(r, col + code - 1)] = 1.0;
                    }
                }
            }
        }
        col += spec.width();
    }
    Ok(out)
}

/// Divides every column by its maximum. Returns the scaled matrix and maxima.
pub fn scale_responses(y: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let maxima: Vec<f64> = y.column_iter().map(|c| c.max()).collect();
    if let Some(j) = maxima.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::param("Y", format!("column {j} has a nonpositive maximum")));
    }
    let mut scaled = y.clone();
    for (j, m) in maxima.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*m);
    }
    Ok((scaled, maxima))
}

pub fn unscale_responses(y: &Matrix, maxima: &[f64]) -> Result<Matrix> {
    if y.ncols() != maxima.len() {
        return Err(Error::Dimension("maxima do not match the number of columns".into()));
    }
    let mut out = y.clone();
    for (j, m) in maxima.iter().enumerate() {
        out.column_mut(j).scale_mut(*m);
    }
    Ok(out)
}
