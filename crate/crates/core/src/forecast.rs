//! Hourly regulating-energy forecasts and the short-term frequency predictor.
//!
//! The hourly frequency integral `W_g` is stored in Hz·h, so multiplying by
//! the droop (kW/Hz) gives kWh.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::domain::{FrequencyTrace, SECONDS_PER_HOUR};

pub const SEASONAL_PERIOD: usize = 24;
pub const DEFAULT_AR_ORDER: usize = 6;
pub const DEFAULT_LEVEL: f64 = 0.95;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("trace does not cover a full aligned hour")]
    TraceTooShort,
    #[error("need at least {needed} hourly values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("all residuals are zero")]
    AllZeroResiduals,
    #[error("need at least {0} residuals")]
    TooFewResiduals(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyIntegralSeries {
    /// `W_g` in Hz·h.
    pub values: Vec<f64>,
    /// UTC timestamp (s) of the start of the first hour.
    pub t0_hour: i64,
}

/// Sums `(f_nominal - f) dt / 3600` over every full UTC hour covered by the trace.
pub fn integrate_hourly(trace: &FrequencyTrace, f_nominal: f64) -> Result<HourlyIntegralSeries, ForecastError> {
    let dt = trace.dt();
    let per_hour = (SECONDS_PER_HOUR / dt).round() as usize;
    if per_hour == 0 {
        return Err(ForecastError::TraceTooShort);
    }
    // first sample that starts an hour
    let t0 = trace.t0();
    let offset_s = (3600 - t0.rem_euclid(3600)) % 3600;
    let skip = (offset_s as f64 / dt).round() as usize;
    if skip >= trace.len() {
        return Err(ForecastError::TraceTooShort);
    }
    let samples = &trace.samples()[skip..];
    let hours = samples.len() / per_hour;
    if hours == 0 {
        return Err(ForecastError::TraceTooShort);
    }
    let values = samples
        .chunks_exact(per_hour)
        .take(hours)
        .map(|c| c.iter().map(|f| (f_nominal - f) * dt).sum::<f64>() / SECONDS_PER_HOUR)
        .collect();
    Ok(HourlyIntegralSeries { values, t0_hour: t0 + offset_s })
}

/// Point forecast with non-negative band half-widths, all in Hz·h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WForecast {
    pub w_hat: f64,
    pub w_up: f64,
    pub w_down: f64,
    pub level: f64,
}

impl WForecast {
    pub fn point(w_hat: f64) -> Self {
        Self { w_hat, w_up: 0.0, w_down: 0.0, level: DEFAULT_LEVEL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Persistence,
    SeasonalNaive24,
    /// AR(p) with intercept on the raw series.
    Ar,
    /// AR(p) plus a seasonal lag on the 24 h differenced series.
    SeasonalAr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "persistence",
            ModelKind::SeasonalNaive24 => "seasonal_naive24",
            ModelKind::Ar => "ar",
            ModelKind::SeasonalAr => "seasonal_ar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "persistence" => Some(ModelKind::Persistence),
            "seasonal_naive24" => Some(ModelKind::SeasonalNaive24),
            "ar" => Some(ModelKind::Ar),
            "seasonal_ar" => Some(ModelKind::SeasonalAr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub kind: ModelKind,
    pub ar_order: usize,
    pub seasonal_period: usize,
    /// `[intercept, lag 1..p, seasonal lag]` for the regression kinds, empty otherwise.
    pub coefficients: Vec<f64>,
    /// Residual quantiles at `(1 - level)/2` and `1 - (1 - level)/2`.
    pub resid_quantiles: (f64, f64),
    pub resid_sigma: f64,
    pub residuals: Vec<f64>,
    pub level: f64,
    /// The normal equations were singular and a small ridge term was added.
    pub ridge_used: bool,
}

impl ForecastModel {
    /// Number of past values needed for one prediction.
    pub fn lags_needed(&self) -> usize {
        lags_needed(self.kind, self.ar_order)
    }
}

fn lags_needed(kind: ModelKind, p: usize) -> usize {
    match kind {
        ModelKind::Persistence => 1,
        ModelKind::SeasonalNaive24 => SEASONAL_PERIOD,
        ModelKind::Ar => p.max(1),
        ModelKind::SeasonalAr => 2 * SEASONAL_PERIOD.max(p),
    }
}

/// Minimum series length accepted by [`fit`].
pub fn min_fit_len(kind: ModelKind, ar_order: usize) -> usize {
    match kind {
        ModelKind::Persistence => 2,
        ModelKind::SeasonalNaive24 => SEASONAL_PERIOD + 1,
        ModelKind::Ar => 10 * (ar_order + 1),
        ModelKind::SeasonalAr => 10 * (ar_order + SEASONAL_PERIOD),
    }
}

pub fn fit(series: &[f64], kind: ModelKind, ar_order: usize, level: f64) -> Result<ForecastModel, ForecastError> {
    let needed = min_fit_len(kind, ar_order);
    if series.len() < needed {
        return Err(ForecastError::InsufficientData { needed, got: series.len() });
    }
    let mut coefficients = Vec::new();
    let mut ridge_used = false;
    let start = lags_needed(kind, ar_order);
    let residuals: Vec<f64> = match kind {
        ModelKind::Persistence => (1..series.len()).map(|g| series[g] - series[g - 1]).collect(),
        ModelKind::SeasonalNaive24 => {
            (SEASONAL_PERIOD..series.len()).map(|g| series[g] - series[g - SEASONAL_PERIOD]).collect()
        }
        ModelKind::Ar | ModelKind::SeasonalAr => {
            let rows: Vec<Vec<f64>> = (start..series.len()).map(|g| regressors(kind, ar_order, &series[..g])).collect();
            let target: Vec<f64> = (start..series.len()).map(|g| regression_target(kind, series, g)).collect();
            let (coef, ridge) = ols(&rows, &target);
            ridge_used = ridge;
            let res = rows
                .iter()
                .zip(&target)
                .map(|(r, t)| t - r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            coefficients = coef;
            res
        }
    };
    let alpha = (1.0 - level) / 2.0;
    let resid_quantiles = (quantile(&residuals, alpha), quantile(&residuals, 1.0 - alpha));
    Ok(ForecastModel {
        kind,
        ar_order,
        seasonal_period: SEASONAL_PERIOD,
        coefficients,
        resid_quantiles,
        resid_sigma: std_dev(&residuals),
        residuals,
        level,
        ridge_used,
    })
}

fn regression_target(kind: ModelKind, series: &[f64], g: usize) -> f64 {
    match kind {
        ModelKind::SeasonalAr => series[g] - series[g - SEASONAL_PERIOD],
        _ => series[g],
    }
}

/// Regressor row for predicting the value that follows `past`.
fn regressors(kind: ModelKind, p: usize, past: &[f64]) -> Vec<f64> {
    let g = past.len();
    let mut row = Vec::with_capacity(p + 2);
    row.push(1.0);
    match kind {
        ModelKind::SeasonalAr => {
            let s = SEASONAL_PERIOD;
            let y = |h: usize| past[h] - past[h - s];
            for i in 1..=p {
                row.push(y(g - i));
            }
            row.push(y(g - s));
        }
        _ => {
            for i in 1..=p {
                row.push(past[g - i]);
            }
        }
    }
    row
}

fn ols(rows: &[Vec<f64>], target: &[f64]) -> (Vec<f64>, bool) {
    let k = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(target);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let well_posed = xtx.clone().cholesky().filter(|c| {
        let d = c.l().diagonal();
        let (lo, hi) = (d.min(), d.max());
        lo > 0.0 && lo / hi > 1e-7
    });
    match well_posed {
        Some(c) => (c.solve(&xty).iter().copied().collect(), false),
        None => {
            let ridged = xtx + DMatrix::identity(k, k) * RIDGE;
            let sol = ridged
                .cholesky()
                .map(|c| c.solve(&xty))
                .unwrap_or_else(|| DVector::zeros(k));
            (sol.iter().copied().collect(), true)
        }
    }
}

pub fn predict_next_hour(model: &ForecastModel, history: &[f64]) -> Result<WForecast, ForecastError> {
    let needed = model.lags_needed();
    if history.len() < needed {
        return Err(ForecastError::InsufficientData { needed, got: history.len() });
    }
    let g = history.len();
    let w_hat = match model.kind {
        ModelKind::Persistence => history[g - 1],
        ModelKind::SeasonalNaive24 => history[g - SEASONAL_PERIOD],
        ModelKind::Ar | ModelKind::SeasonalAr => {
            let row = regressors(model.kind, model.ar_order, history);
            let pred: f64 = row.iter().zip(&model.coefficients).map(|(a, b)| a * b).sum();
            if model.kind == ModelKind::SeasonalAr {
                history[g - SEASONAL_PERIOD] + pred
            } else {
                pred
            }
        }
    };
    let (lo, hi) = model.resid_quantiles;
    Ok(WForecast { w_hat, w_up: hi.max(0.0), w_down: (-lo).max(0.0), level: model.level })
}

/// Fraction of residuals with `|r| >= k * sigma`, sigma being their standard deviation.
pub fn gamma_t(residuals: &[f64], k_sigma: f64) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let sigma = std_dev(residuals);
    if sigma == 0.0 {
        return 0.0;
    }
    let count = residuals.iter().filter(|r| r.abs() >= k_sigma * sigma).count();
    count as f64 / residuals.len() as f64
}

pub fn durbin_watson(residuals: &[f64]) -> Result<f64, ForecastError> {
    if residuals.len() < 2 {
        return Err(ForecastError::TooFewResiduals(2));
    }
    let den: f64 = residuals.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(ForecastError::AllZeroResiduals);
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / den)
}

/// Persistence forecast of the next `p` frequency samples. Empty input gives an empty vector.
pub fn short_term_frequency(past: &[f64], p: usize) -> Vec<f64> {
    match past.last() {
        Some(&f) => vec![f; p],
        None => Vec::new(),
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Linear-interpolation quantile (the usual "type 7" definition).
pub fn quantile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Forecast plus whether a fallback path produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastOutcome {
    pub forecast: WForecast,
    pub fallback: bool,
}

/// Source of hourly forecasts for the upper layer.
pub trait ForecastProvider: Send {
    /// Forecast for the hour that follows `history` (all completed hours).
    fn forecast(&mut self, history: &[f64]) -> ForecastOutcome;
}

/// Refits a model on all completed hours at each call.
#[derive(Debug, Clone)]
pub struct ModelProvider {
    pub kind: ModelKind,
    pub ar_order: usize,
    pub level: f64,
}

impl ModelProvider {
    pub fn new(kind: ModelKind, ar_order: usize, level: f64) -> Self {
        Self { kind, ar_order, level }
    }
}

impl ForecastProvider for ModelProvider {
    fn forecast(&mut self, history: &[f64]) -> ForecastOutcome {
        let primary = fit(history, self.kind, self.ar_order, self.level)
            .and_then(|m| predict_next_hour(&m, history));
        if let Ok(forecast) = primary {
            return ForecastOutcome { forecast, fallback: false };
        }
        let persistence = fit(history, ModelKind::Persistence, 0, self.level)
            .and_then(|m| predict_next_hour(&m, history));
        match persistence {
            Ok(forecast) => ForecastOutcome { forecast, fallback: true },
            Err(_) => ForecastOutcome {
                forecast: WForecast { level: self.level, ..WForecast::point(history.last().copied().unwrap_or(0.0)) },
                fallback: true,
            },
        }
    }
}

/// Perfect hindsight: returns the realised values in order, with fixed bands.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    realised: Vec<f64>,
    next: usize,
    pub w_up: f64,
    pub w_down: f64,
}

impl OracleProvider {
    pub fn new(realised: Vec<f64>) -> Self {
        Self { realised, next: 0, w_up: 0.0, w_down: 0.0 }
    }
}

impl ForecastProvider for OracleProvider {
    fn forecast(&mut self, _history: &[f64]) -> ForecastOutcome {
        let w_hat = self.realised.get(self.next).copied();
        self.next += 1;
        ForecastOutcome {
            forecast: WForecast { w_hat: w_hat.unwrap_or(0.0), w_up: self.w_up, w_down: self.w_down, level: DEFAULT_LEVEL },
            fallback: w_hat.is_none(),
        }
    }
}
