//! Post-run metrics: tracking and energy errors, servo wear proxies, SOE safety.

use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{BessConfig, DecisionStatus};
use crate::forecast::quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpiError {
    #[error("window of {window} s is longer than the log ({len} s)")]
    WindowLargerThanLog { window: f64, len: f64 },
    #[error("window {window} s is not a multiple of the step {dt} s")]
    WindowNotMultiple { window: f64, dt: f64 },
    #[error("baseline run {0:?} not found")]
    MissingBaseline(String),
}

/// One simulated step. Powers in kW, `b` positive charging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub k: usize,
    pub f: f64,
    pub p_set: f64,
    pub h_set: f64,
    pub h: f64,
    pub b_set: f64,
    pub b: f64,
    pub soe: f64,
    pub v_dc: f64,
    pub b0: f64,
    pub status: DecisionStatus,
    pub battery_clipped: bool,
    pub hydro_clamped: bool,
    pub soe_saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn new(dt: f64) -> Self {
        Self { dt, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `TE_k = P_set_k - (H_k - B_k)` from the plant truth.
pub fn tracking_error_series(log: &RunLog) -> Vec<f64> {
    log.rows.iter().map(|r| r.p_set - (r.h - r.b)).collect()
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// RMS over non-overlapping windows of the window-mean tracking error.
/// A trailing partial window is ignored.
pub fn energy_error(te: &[f64], delta_t: f64, dt: f64) -> Result<f64, KpiError> {
    let ratio = delta_t / dt;
    let w = ratio.round() as usize;
    if w == 0 || (ratio - w as f64).abs() > 1e-9 {
        return Err(KpiError::WindowNotMultiple { window: delta_t, dt });
    }
    if w > te.len() {
        return Err(KpiError::WindowLargerThanLog { window: delta_t, len: te.len() as f64 * dt });
    }
    let means: Vec<f64> = te.chunks_exact(w).map(|c| c.iter().sum::<f64>() / w as f64).collect();
    Ok(rms(&means))
}

/// Mileage and number of movements of a set-point series.
///
/// A step moves when `|ΔH_set| > eps_move`. Mileage sums the moving steps;
/// a movement is a maximal run of consecutive moving steps.
pub fn servo_kpis(h_set: &[f64], eps_move: f64) -> (f64, usize) {
    let mut mileage = 0.0;
    let mut nom = 0;
    let mut in_move = false;
    for w in h_set.windows(2) {
        let d = (w[1] - w[0]).abs();
        if d > eps_move {
            mileage += d;
            if !in_move {
                nom += 1;
            }
            in_move = true;
        } else {
            in_move = false;
        }
    }
    (mileage, nom)
}

/// Quantiles of `|H_k - H_{k-1}| / dt`.
pub fn dh_cdf(log: &RunLog, quantiles: &[f64]) -> Vec<f64> {
    let rates: Vec<f64> = log.rows.windows(2).map(|w| (w[1].h - w[0].h).abs() / log.dt).collect();
    quantiles.iter().map(|&q| quantile(&rates, q)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoeSafety {
    pub violation_steps: usize,
    pub soe_min_seen: f64,
    pub soe_max_seen: f64,
}

pub fn soe_safety(log: &RunLog, bess: &BessConfig) -> SoeSafety {
    let mut out = SoeSafety { violation_steps: 0, soe_min_seen: f64::INFINITY, soe_max_seen: f64::NEG_INFINITY };
    for r in &log.rows {
        if r.soe < bess.soe_min || r.soe > bess.soe_max {
            out.violation_steps += 1;
        }
        out.soe_min_seen = out.soe_min_seen.min(r.soe);
        out.soe_max_seen = out.soe_max_seen.max(r.soe);
    }
    out
}

pub const DH_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub run_id: String,
    pub controller: String,
    pub bess_kw: f64,
    pub te_rms_1s: f64,
    pub e10: f64,
    pub e30: f64,
    pub e60: f64,
    pub mileage: f64,
    pub nom: usize,
    pub dh_p95: f64,
    /// `(quantile, |dH/dt|)` pairs.
    pub dh_cdf: Vec<(f64, f64)>,
    pub soe_viol: usize,
    pub soe_min_seen: f64,
    pub soe_max_seen: f64,
    pub fallbacks: usize,
}

pub const KPI_COLUMNS: [&str; 12] = [
    "run_id", "controller", "bess_kw", "te_rms_1s", "e10", "e30", "e60", "mileage", "nom", "dh_p95", "soe_viol",
    "fallbacks",
];

impl KpiReport {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.controller.clone(),
            format!("{}", self.bess_kw),
            format!("{:.6}", self.te_rms_1s),
            format!("{:.6}", self.e10),
            format!("{:.6}", self.e30),
            format!("{:.6}", self.e60),
            format!("{:.6}", self.mileage),
            self.nom.to_string(),
            format!("{:.6}", self.dh_p95),
            self.soe_viol.to_string(),
            self.fallbacks.to_string(),
        ]
    }
}

/// Default movement threshold: 0.25 % of the hydro rating.
pub fn default_eps_move(h_max: f64) -> f64 {
    0.0025 * h_max
}

pub fn compute_kpis(
    log: &RunLog,
    run_id: &str,
    controller: &str,
    bess: Option<&BessConfig>,
    eps_move: f64,
) -> KpiReport {
    let te = tracking_error_series(log);
    let dt = log.dt;
    let ee = |w: f64| energy_error(&te, w, dt).unwrap_or(f64::NAN);
    let h_set: Vec<f64> = log.rows.iter().map(|r| r.h_set).collect();
    let (mileage, nom) = servo_kpis(&h_set, eps_move);
    let cdf = dh_cdf(log, &DH_QUANTILES);
    let safety = bess.map(|b| soe_safety(log, b));
    KpiReport {
        run_id: run_id.to_string(),
        controller: controller.to_string(),
        bess_kw: bess.map_or(0.0, |b| b.capability.b_rated),
        te_rms_1s: rms(&te),
        e10: ee(10.0),
        e30: ee(30.0),
        e60: ee(60.0),
        mileage,
        nom,
        dh_p95: cdf[2],
        dh_cdf: DH_QUANTILES.iter().copied().zip(cdf).collect(),
        soe_viol: safety.map_or(0, |s| s.violation_steps),
        soe_min_seen: safety.map_or(f64::NAN, |s| s.soe_min_seen),
        soe_max_seen: safety.map_or(f64::NAN, |s| s.soe_max_seen),
        fallbacks: log.rows.iter().filter(|r| r.status == DecisionStatus::Fallback).count(),
    }
}

/// Percent change of `value` relative to `base`.
pub fn percent_change(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(value)
        }
    } else {
        100.0 * (value - base) / base
    }
}

pub const COMPARED: [&str; 7] = ["te_rms_1s", "e10", "e30", "e60", "mileage", "nom", "dh_p95"];

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub run_id: String,
    pub controller: String,
    pub bess_kw: f64,
    /// Percent change per entry of [`COMPARED`].
    pub change: Vec<f64>,
}

fn compared_values(r: &KpiReport) -> [f64; 7] {
    [r.te_rms_1s, r.e10, r.e30, r.e60, r.mileage, r.nom as f64, r.dh_p95]
}

pub fn compare(reports: &[KpiReport], baseline: &str) -> Result<Vec<Reduction>, KpiError> {
    let base = reports
        .iter()
        .find(|r| r.run_id == baseline)
        .ok_or_else(|| KpiError::MissingBaseline(baseline.to_string()))?;
    let bv = compared_values(base);
    Ok(reports
        .iter()
        .map(|r| {
            let v = compared_values(r);
            Reduction {
                run_id: r.run_id.clone(),
                controller: r.controller.clone(),
                bess_kw: r.bess_kw,
                change: v.iter().zip(bv.iter()).map(|(&x, &b)| percent_change(x, b)).collect(),
            }
        })
        .collect())
}

/// Aligned plain-text rendering of a reduction table.
pub fn reduction_table(rows: &[Reduction]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<24} {:<11} {:>7}", "run_id", "controller", "bess_kw");
    for c in COMPARED {
        let _ = write!(out, " {c:>10}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<24} {:<11} {:>7}", r.run_id, r.controller, r.bess_kw);
        for v in &r.change {
            let _ = write!(out, " {:>9.1}%", v);
        }
        out.push('\n');
    }
    out
}
