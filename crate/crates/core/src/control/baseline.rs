//! Droop, hydro-only and dead-band-filter controllers.

use crate::domain::{DecisionStatus, Diagnostics, PlantConfig, StepDecision};

/// Dead-banded frequency deviation `f_nominal - f`, Hz.
pub fn deviation(f: f64, plant: &PlantConfig) -> f64 {
    let df = plant.f_nominal - f;
    if df.abs() <= plant.deadband_f {
        0.0
    } else {
        df
    }
}

/// PCC power expected by the droop characteristic, kW.
pub fn droop_target(f_hat: f64, p_disp: f64, plant: &PlantConfig) -> f64 {
    p_disp + deviation(f_hat, plant) * plant.sigma_f
}

fn decision(k: usize, h_set: f64, b_set: f64, p_set: f64, diagnostics: Diagnostics) -> StepDecision {
    StepDecision { k, h_set, b_set, p_set, te: 0.0, diagnostics }
}

pub fn step_hydro_only(k: usize, f_meas: f64, p_disp: f64, plant: &PlantConfig) -> StepDecision {
    let p_set = droop_target(f_meas, p_disp, plant);
    let h_set = p_set.clamp(plant.h_min, plant.h_max);
    let diagnostics = Diagnostics { hydro_clamped: h_set != p_set, ..Diagnostics::default() };
    decision(k, h_set, 0.0, p_set, diagnostics)
}

/// Dead-band filter split.
///
/// Deviations up to `threshold_f` go to the battery on top of the hourly
/// offset `b0`; beyond it the battery holds its saturated share and hydro
/// takes the rest. `capability` clips the battery set-point and the clipped
/// part is not passed on to hydro.
pub fn step_dbf(
    k: usize,
    f_meas: f64,
    p_disp: f64,
    b0: f64,
    threshold_f: f64,
    capability: (f64, f64),
    plant: &PlantConfig,
) -> StepDecision {
    let df = deviation(f_meas, plant);
    let p_set = p_disp + df * plant.sigma_f;
    let hydro_dispatch = p_disp + b0;
    let (battery_share, hydro_share) = if df.abs() <= threshold_f {
        (df, 0.0)
    } else {
        let s = df.signum();
        (s * threshold_f, (df.abs() - threshold_f) * s)
    };
    let b_raw = b0 - battery_share * plant.sigma_f;
    let b_set = b_raw.clamp(capability.0, capability.1);
    let h_raw = hydro_dispatch + hydro_share * plant.sigma_f;
    let h_set = h_raw.clamp(plant.h_min, plant.h_max);
    let diagnostics = Diagnostics {
        status: DecisionStatus::Direct,
        battery_clipped: b_set != b_raw,
        hydro_clamped: h_set != h_raw,
        ..Diagnostics::default()
    };
    decision(k, h_set, b_set, p_set, diagnostics)
}
