//! Truth models: hydro unit, battery pack and converter capability.

use thiserror::Error;

use crate::domain::{BessConfig, PlantConfig, TtcParams, SECONDS_PER_HOUR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("DC voltage {v_dc:.1} V outside the guard band [{lo:.1}, {hi:.1}] V")]
    VoltageWindowViolated { v_dc: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroState {
    /// Output power, kW.
    pub h: f64,
}

/// First-order lag towards the clamped set-point, then ramp limiting.
pub fn hydro_step(state: HydroState, h_set: f64, cfg: &PlantConfig) -> HydroState {
    let target = h_set.clamp(cfg.h_min, cfg.h_max);
    let a = cfg.dt / cfg.tau_h;
    let next = (1.0 - a) * state.h + a * target;
    let max_move = cfg.h_dot_max * cfg.dt;
    let h = if (next - state.h).abs() <= max_move {
        next
    } else {
        state.h + max_move.copysign(next - state.h)
    };
    HydroState { h: h.clamp(cfg.h_min, cfg.h_max) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BessState {
    pub soe: f64,
    /// RC branch voltages, V.
    pub x: [f64; 3],
    /// Terminal DC voltage, V.
    pub v_dc: f64,
    /// AC-side voltage magnitude, V.
    pub v_ac: f64,
    /// DC current, A (positive charging).
    pub i_dc: f64,
}

pub const V_AC_NOMINAL: f64 = 400.0;

impl BessState {
    /// Relaxed pack at the given SOE.
    pub fn at_rest(soe: f64, cfg: &BessConfig) -> Self {
        Self { soe, x: [0.0; 3], v_dc: cfg.ttc.ocv(soe), v_ac: V_AC_NOMINAL, i_dc: 0.0 }
    }
}

/// Exact zero-order-hold discretisation of the TTC circuit.
///
/// With branch states `x` at the start of a step and current `i` held over
/// the step:
///
/// ```text
/// x'_j = phi_v[j] x_j + psi_x[j] i
/// v    = ocv(SOE) + sum_j phi_v[j] x_j + psi_i i
/// ```
///
/// so `psi_1 = ocv(SOE)` is the affine term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtcDiscrete {
    pub phi_v: [f64; 3],
    pub psi_x: [f64; 3],
    pub psi_i: f64,
}

pub fn discretize_ttc(ttc: &TtcParams, dt: f64) -> TtcDiscrete {
    let mut phi_v = [0.0; 3];
    let mut psi_x = [0.0; 3];
    for (j, &(r, c)) in ttc.branches.iter().enumerate() {
        let tau = r * c;
        let a = if tau > 0.0 { (-dt / tau).exp() } else { 0.0 };
        phi_v[j] = a;
        psi_x[j] = r * (1.0 - a);
    }
    let psi_i = ttc.r_s + psi_x.iter().sum::<f64>();
    TtcDiscrete { phi_v, psi_x, psi_i }
}

impl TtcDiscrete {
    /// Open-circuit part of the terminal voltage for the coming step.
    pub fn free_voltage(&self, ocv: f64, x: &[f64; 3]) -> f64 {
        ocv + (0..3).map(|j| self.phi_v[j] * x[j]).sum::<f64>()
    }

    pub fn advance(&self, x: &[f64; 3], i: f64) -> [f64; 3] {
        [
            self.phi_v[0] * x[0] + self.psi_x[0] * i,
            self.phi_v[1] * x[1] + self.psi_x[1] * i,
            self.phi_v[2] * x[2] + self.psi_x[2] * i,
        ]
    }

    /// Current drawing `p_w` watts at the terminals: the root of
    /// `psi_i i^2 + v0 i - p_w = 0` on the branch through `i = 0`.
    pub fn current_for_power(&self, v0: f64, p_w: f64) -> Option<f64> {
        if v0 <= 0.0 {
            return None;
        }
        if self.psi_i == 0.0 {
            return Some(p_w / v0);
        }
        let disc = v0 * v0 + 4.0 * self.psi_i * p_w;
        if disc < 0.0 {
            return None;
        }
        Some(2.0 * p_w / (v0 + disc.sqrt()))
    }
}

/// Converter power bounds `(B_lo, B_hi)` in kW, `B_lo <= 0 <= B_hi`.
pub fn capability(state: &BessState, cfg: &BessConfig) -> (f64, f64) {
    let cap = &cfg.capability;
    let base_hi = cap.b_rated.min(cfg.max_charge_kw).max(0.0);
    let base_lo = cap.b_rated.min(cfg.max_discharge_kw).max(0.0);

    let band = cap.soe_derate_band;
    let (soe_ch, soe_dch) = if band > 0.0 {
        (
            ((cfg.soe_max - state.soe) / band).clamp(0.0, 1.0),
            ((state.soe - cfg.soe_min) / band).clamp(0.0, 1.0),
        )
    } else {
        (
            if state.soe < cfg.soe_max { 1.0 } else { 0.0 },
            if state.soe > cfg.soe_min { 1.0 } else { 0.0 },
        )
    };

    let edge = 0.05 * (cap.v_dc_max - cap.v_dc_min);
    let v_dch = ((state.v_dc - cap.v_dc_min) / edge).clamp(0.0, 1.0);
    let v_ch = ((cap.v_dc_max - state.v_dc) / edge).clamp(0.0, 1.0);

    (-base_lo * soe_dch * v_dch, base_hi * soe_ch * v_ch)
}

/// Result of one battery step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BessStep {
    pub state: BessState,
    /// AC power actually applied after capability clipping, kW.
    pub b_applied: f64,
    /// DC power, kW.
    pub b_dc: f64,
    pub clipped: bool,
    /// SOE left [0, 1] and was clipped.
    pub soe_saturated: bool,
}

/// Advances the pack by `dt` seconds with AC set-point `b_set` (kW, positive charging).
pub fn bess_step(state: &BessState, b_set: f64, cfg: &BessConfig, dt: f64) -> Result<BessStep, PlantError> {
    let (lo, hi) = capability(state, cfg);
    let b_applied = b_set.clamp(lo, hi);
    let clipped = b_applied != b_set;
    let b_dc = cfg.ac_to_dc(b_applied);

    let disc = discretize_ttc(&cfg.ttc, dt);
    let ocv = cfg.ttc.ocv(state.soe);
    let v0 = disc.free_voltage(ocv, &state.x);
    let cap = &cfg.capability;
    let (guard_lo, guard_hi) = (0.9 * cap.v_dc_min, 1.1 * cap.v_dc_max);
    let i = disc
        .current_for_power(v0, b_dc * 1000.0)
        .ok_or(PlantError::VoltageWindowViolated { v_dc: v0 / 2.0, lo: guard_lo, hi: guard_hi })?;
    let v_dc = v0 + disc.psi_i * i;
    if !(guard_lo..=guard_hi).contains(&v_dc) {
        return Err(PlantError::VoltageWindowViolated { v_dc, lo: guard_lo, hi: guard_hi });
    }

    let soe_raw = state.soe + b_dc * dt / (SECONDS_PER_HOUR * cfg.capacity_kwh);
    let soe = soe_raw.clamp(0.0, 1.0);
    Ok(BessStep {
        state: BessState { soe, x: disc.advance(&state.x, i), v_dc, v_ac: state.v_ac, i_dc: i },
        b_applied,
        b_dc,
        clipped,
        soe_saturated: soe != soe_raw,
    })
}
