//! Out-of-sample comparison of hourly forecast models on one trace.

use std::io::Write;

use crate::domain::FrequencyTrace;
use crate::forecast::{
    durbin_watson, fit, gamma_t, integrate_hourly, predict_next_hour, std_dev, ForecastError, ModelKind,
    DEFAULT_AR_ORDER, DEFAULT_LEVEL,
};

/// Normal quantiles for two-sided 95 % and 99 % coverage.
pub const Z95: f64 = 1.959_963_984_540_054;
pub const Z99: f64 = 2.575_829_303_548_901;

/// Held-out statistics of one model. Errors are in mHz·h.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRow {
    pub model: ModelKind,
    pub n_train: usize,
    pub n_test: usize,
    pub mse: f64,
    pub sigma: f64,
    pub gamma_95: f64,
    pub gamma_99: f64,
    pub dw: f64,
}

pub const BACKTEST_COLUMNS: [&str; 8] = ["model", "n_train", "n_test", "mse", "sigma", "gamma_95", "gamma_99", "dw"];

/// Fits on the first `train_fraction` of `series` and scores one-step
/// predictions over the rest, without refitting.
pub fn backtest_series(
    series: &[f64],
    model: ModelKind,
    ar_order: usize,
    train_fraction: f64,
) -> Result<BacktestRow, ForecastError> {
    let n_train = ((series.len() as f64) * train_fraction).round() as usize;
    let n_train = n_train.min(series.len());
    let fitted = fit(&series[..n_train], model, ar_order, DEFAULT_LEVEL)?;
    let mut errors = Vec::with_capacity(series.len() - n_train);
    for g in n_train..series.len() {
        let fc = predict_next_hour(&fitted, &series[..g])?;
        errors.push(1000.0 * (series[g] - fc.w_hat));
    }
    if errors.len() < 2 {
        return Err(ForecastError::TooFewResiduals(errors.len()));
    }
    Ok(BacktestRow {
        model,
        n_train,
        n_test: errors.len(),
        mse: errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64,
        sigma: std_dev(&errors),
        gamma_95: gamma_t(&errors, Z95),
        gamma_99: gamma_t(&errors, Z99),
        dw: durbin_watson(&errors)?,
    })
}

pub const ALL_MODELS: [ModelKind; 4] =
    [ModelKind::Persistence, ModelKind::SeasonalNaive24, ModelKind::Ar, ModelKind::SeasonalAr];

/// One row per model that has enough data; models that cannot be fitted are skipped.
pub fn forecast_backtest(trace: &FrequencyTrace, f_nominal: f64, train_fraction: f64) -> Result<Vec<BacktestRow>, ForecastError> {
    let series = integrate_hourly(trace, f_nominal)?.values;
    let mut rows = Vec::new();
    let mut last_err = None;
    for &m in &ALL_MODELS {
        match backtest_series(&series, m, DEFAULT_AR_ORDER, train_fraction) {
            Ok(r) => rows.push(r),
            Err(e) => last_err = Some(e),
        }
    }
    if rows.is_empty() {
        return Err(last_err.unwrap_or(ForecastError::InsufficientData { needed: 2, got: series.len() }));
    }
    Ok(rows)
}

pub fn write_backtest_csv<W: Write>(rows: &[BacktestRow], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(BACKTEST_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.model.name().to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
            format!("{:.6}", r.mse),
            format!("{:.6}", r.sigma),
            format!("{:.4}", r.gamma_95),
            format!("{:.4}", r.gamma_99),
            format!("{:.4}", r.dw),
        ])?;
    }
    w.flush()?;
    Ok(())
}
