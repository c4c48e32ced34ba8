//! Hourly SOE manager: smallest constant battery offset that keeps the
//! forecast SOE band inside the limits.

use nalgebra::{DMatrix, DVector};

use crate::domain::BessConfig;
use crate::forecast::WForecast;
use crate::qp::{self, QpProblem, QpStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct UpperLayerInput {
    pub soe_meas: f64,
    pub forecast: WForecast,
    /// Droop, kW/Hz.
    pub sigma_f: f64,
    pub bess: BessConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperLayerResult {
    /// Hourly offset, kW, positive charging.
    pub b0: f64,
    pub b0_plus: f64,
    pub b0_minus: f64,
    pub predicted_soe_end: f64,
    pub soe_up: f64,
    pub soe_down: f64,
    pub feasible: bool,
}

/// Efficiency-adjusted integral: energy leaving the cells per unit droop.
/// Positive `w` (under-frequency) means the battery discharges.
pub fn adjusted_integral(w: f64, bess: &BessConfig) -> f64 {
    if w >= 0.0 {
        w / bess.eta_dch
    } else {
        w * bess.eta_ch
    }
}

/// Stored energy (kWh) added over one hour by a constant offset split.
pub fn offset_energy(b0_plus: f64, b0_minus: f64, bess: &BessConfig) -> f64 {
    bess.eta_ch * b0_plus - b0_minus / bess.eta_dch
}

/// End-of-hour SOE for a given offset split and frequency integral.
pub fn soe_after_hour(soe: f64, b0_plus: f64, b0_minus: f64, w: f64, sigma_f: f64, bess: &BessConfig) -> f64 {
    soe + (offset_energy(b0_plus, b0_minus, bess) - sigma_f * adjusted_integral(w, bess)) / bess.capacity_kwh
}

fn offset_limits(bess: &BessConfig) -> (f64, f64) {
    let b_ch = bess.max_charge_kw.min(bess.capability.b_rated).max(0.0);
    let b_dch = bess.max_discharge_kw.min(bess.capability.b_rated).max(0.0);
    (b_ch, b_dch)
}

fn split(b0: f64) -> (f64, f64) {
    (b0.max(0.0), (-b0).max(0.0))
}

pub fn solve_upper_layer(input: &UpperLayerInput) -> UpperLayerResult {
    let bess = &input.bess;
    let fc = &input.forecast;
    let c_b = bess.capacity_kwh;
    let (b_ch, b_dch) = offset_limits(bess);

    // Band on the offset energy (kWh) that keeps both band edges inside the limits.
    let e_lo = (bess.soe_min - input.soe_meas) * c_b + input.sigma_f * adjusted_integral(fc.w_hat + fc.w_up, bess);
    let e_hi = (bess.soe_max - input.soe_meas) * c_b + input.sigma_f * adjusted_integral(fc.w_hat - fc.w_down, bess);
    let e_min = -b_dch / bess.eta_dch;
    let e_max = bess.eta_ch * b_ch;

    let energy_to_offset = |e: f64| if e >= 0.0 { e / bess.eta_ch } else { e * bess.eta_dch };

    let (b0_plus, b0_minus, feasible) = if e_lo > e_hi || e_lo > e_max || e_hi < e_min {
        // Nothing satisfies both edges: aim for the middle of the band, saturated.
        let target = if e_lo > e_hi { 0.5 * (e_lo + e_hi) } else if e_lo > e_max { e_lo } else { e_hi };
        let (p, m) = split(energy_to_offset(target.clamp(e_min, e_max)));
        (p, m, false)
    } else {
        solve_qp(input, e_lo, e_hi, b_ch, b_dch).unwrap_or_else(|| {
            // closed form: the offset energy nearest to zero inside the band
            let (p, m) = split(energy_to_offset(0.0f64.clamp(e_lo, e_hi)));
            (p, m, true)
        })
    };

    let b0 = b0_plus - b0_minus;
    let soe = |w: f64| soe_after_hour(input.soe_meas, b0_plus, b0_minus, w, input.sigma_f, bess);
    UpperLayerResult {
        b0,
        b0_plus,
        b0_minus,
        predicted_soe_end: soe(fc.w_hat),
        soe_up: soe(fc.w_hat - fc.w_down),
        soe_down: soe(fc.w_hat + fc.w_up),
        feasible,
    }
}

/// `min (B+ + B-)^2` over the offset split subject to the SOE band.
fn solve_qp(input: &UpperLayerInput, e_lo: f64, e_hi: f64, b_ch: f64, b_dch: f64) -> Option<(f64, f64, bool)> {
    let bess = &input.bess;
    let p = DMatrix::from_element(2, 2, 2.0);
    let a = DMatrix::from_row_slice(3, 2, &[bess.eta_ch, -1.0 / bess.eta_dch, 1.0, 0.0, 0.0, 1.0]);
    let l = DVector::from_row_slice(&[e_lo, 0.0, 0.0]);
    let u = DVector::from_row_slice(&[e_hi, b_ch, b_dch]);
    let problem = QpProblem::new(p, DVector::zeros(2), a, l, u).ok()?;
    let sol = qp::solve(&problem, 1e-9, 20_000).ok()?;
    if sol.status != QpStatus::Solved {
        return None;
    }
    let (mut bp, mut bm) = (sol.x[0].clamp(0.0, b_ch), sol.x[1].clamp(0.0, b_dch));
    // The optimum never uses both sides; remove solver round-off.
    let net = bp - bm;
    if bp > 0.0 && bm > 0.0 {
        (bp, bm) = split(net);
    }
    Some((bp, bm, true))
}
