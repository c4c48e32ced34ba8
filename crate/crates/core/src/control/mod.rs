//! Controllers: hydro-only droop, dead-band filter and the double-layer MPC.

pub mod baseline;
pub mod lower;
pub mod upper;

pub use baseline::{deviation, droop_target, step_dbf, step_hydro_only};
pub use lower::{build_ll_qp, Fidelity, LowerLayer, LowerLayerError, LowerLayerInput, LowerLayerParams, LowerLayerSolution};
pub use upper::{solve_upper_layer, UpperLayerInput, UpperLayerResult};

use crate::domain::{BessConfig, DecisionStatus, Diagnostics, PlantConfig, StepDecision, SECONDS_PER_HOUR};
use crate::forecast::{short_term_frequency, ForecastProvider, WForecast};
use crate::plant::{capability, BessState};
use crate::qp::QpStatus;

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind {
    HydroOnly,
    Dbf { threshold_hz: f64 },
    Dlmpc(LowerLayerParams),
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::HydroOnly => "hydro_only",
            ControllerKind::Dbf { .. } => "dbf",
            ControllerKind::Dlmpc(_) => "dlmpc",
        }
    }
}

/// What the controller sees at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub k: usize,
    pub f_meas: f64,
    pub h_meas: f64,
    pub bess: Option<BessState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourUpdate {
    pub g: usize,
    pub b0: f64,
    /// Hydro dispatch for the hour: PCC dispatch plus the battery offset.
    pub hydro_dispatch: f64,
    pub forecast: Option<WForecast>,
    pub upper: Option<UpperLayerResult>,
    pub forecast_fallback: bool,
}

/// One controller instance per run, carrying the state between steps.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    plant: PlantConfig,
    bess: Option<BessConfig>,
    b0: f64,
    lower: Option<LowerLayer>,
    h_set_prev: f64,
    h_ref_prev: f64,
    fallbacks: usize,
}

impl Controller {
    pub fn new(kind: ControllerKind, plant: PlantConfig, bess: Option<BessConfig>) -> Self {
        let bess = if kind == ControllerKind::HydroOnly { None } else { bess };
        let lower = match &kind {
            ControllerKind::Dlmpc(params) if bess.is_some() => Some(LowerLayer::new(params.clone())),
            _ => None,
        };
        let h0 = plant.dispatch_at_hour(0);
        Self { kind, plant, bess, b0: 0.0, lower, h_set_prev: h0, h_ref_prev: h0, fallbacks: 0 }
    }

    pub fn kind(&self) -> &ControllerKind {
        &self.kind
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Start of hour `g`: hourly offset from the upper layer. `history` holds
    /// the frequency integrals of all completed hours.
    pub fn hour_boundary(
        &mut self,
        g: usize,
        soe_meas: f64,
        history: &[f64],
        provider: &mut dyn ForecastProvider,
    ) -> HourUpdate {
        let p_disp = self.plant.dispatch_at_hour(g);
        let Some(bess) = &self.bess else {
            self.b0 = 0.0;
            return HourUpdate { g, b0: 0.0, hydro_dispatch: p_disp, forecast: None, upper: None, forecast_fallback: false };
        };
        let outcome = provider.forecast(history);
        let result = solve_upper_layer(&UpperLayerInput {
            soe_meas,
            forecast: outcome.forecast,
            sigma_f: self.plant.sigma_f,
            bess: bess.clone(),
        });
        self.b0 = result.b0;
        HourUpdate {
            g,
            b0: result.b0,
            hydro_dispatch: p_disp + result.b0,
            forecast: Some(outcome.forecast),
            upper: Some(result),
            forecast_fallback: outcome.fallback,
        }
    }

    fn dispatch_at_step(&self, k: usize) -> f64 {
        let g = (k as f64 * self.plant.dt / SECONDS_PER_HOUR).floor() as usize;
        self.plant.dispatch_at_hour(g)
    }

    pub fn step(&mut self, m: &Measurement) -> StepDecision {
        let p_disp = self.dispatch_at_step(m.k);
        let decision = match (&self.kind, &self.bess, m.bess) {
            (ControllerKind::Dbf { threshold_hz }, Some(bess), Some(state)) => {
                step_dbf(m.k, m.f_meas, p_disp, self.b0, *threshold_hz, capability(&state, bess), &self.plant)
            }
            (ControllerKind::Dlmpc(_), Some(_), Some(state)) => self.step_dlmpc(m, state, p_disp),
            _ => step_hydro_only(m.k, m.f_meas, p_disp, &self.plant),
        };
        self.h_set_prev = decision.h_set;
        self.h_ref_prev = p_disp + self.b0;
        decision
    }

    fn step_dlmpc(&mut self, m: &Measurement, state: BessState, p_disp: f64) -> StepDecision {
        let bess = self.bess.as_ref().expect("dlmpc has a battery");
        let lower = self.lower.as_mut().expect("dlmpc has a lower layer");
        let p = lower.params.horizon;
        let input = LowerLayerInput {
            k: m.k,
            f_hat: short_term_frequency(&[m.f_meas], p),
            p_disp_horizon: (0..p).map(|j| {
                let g = ((m.k + j) as f64 * self.plant.dt / SECONDS_PER_HOUR).floor() as usize;
                self.plant.dispatch_at_hour(g)
            }).collect(),
            h_meas: m.h_meas,
            h_set_prev: self.h_set_prev,
            h_ref_prev: self.h_ref_prev,
            bess_state: state,
            b0: self.b0,
            gamma: lower.params.gamma,
            p,
        };
        let cap = capability(&state, bess);
        match lower.solve(&input, &self.plant, bess) {
            Ok(sol) if sol.status == QpStatus::Solved => {
                let h_set = sol.h_set[0].clamp(self.plant.h_min, self.plant.h_max);
                let b_set = sol.b_set[0].clamp(cap.0, cap.1);
                StepDecision {
                    k: m.k,
                    h_set,
                    b_set,
                    p_set: droop_target(m.f_meas, p_disp, &self.plant),
                    te: 0.0,
                    diagnostics: Diagnostics {
                        status: DecisionStatus::Solved,
                        objective: sol.objective,
                        iterations: sol.iterations,
                        battery_clipped: (b_set - sol.b_set[0]).abs() > 1e-6,
                        hydro_clamped: (h_set - sol.h_set[0]).abs() > 1e-6,
                        active: sol.active,
                    },
                }
            }
            _ => {
                self.fallbacks += 1;
                let threshold = (cap.1.max(-cap.0) / self.plant.sigma_f).max(1e-9);
                let mut d = step_dbf(m.k, m.f_meas, p_disp, self.b0, threshold, cap, &self.plant);
                d.diagnostics.status = DecisionStatus::Fallback;
                d
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::OracleProvider;

    #[test]
    fn offset_shifts_hydro_and_battery_together() {
        let plant = PlantConfig::default();
        let mut bess = BessConfig::sized(9.0, 9.0);
        bess.eta_ch = 1.0;
        bess.eta_dch = 1.0;
        let mut c = Controller::new(ControllerKind::Dbf { threshold_hz: 0.072 }, plant.clone(), Some(bess.clone()));
        let mut provider = OracleProvider::new(vec![0.032]);
        let upd = c.hour_boundary(0, 0.5, &[], &mut provider);
        assert!((upd.b0 - 0.4).abs() < 1e-6);
        assert!((upd.hydro_dispatch - 27.4).abs() < 1e-6);
        let state = BessState::at_rest(0.5, &bess);
        let d = c.step(&Measurement { k: 0, f_meas: 50.0, h_meas: 27.0, bess: Some(state) });
        assert!((d.h_set - d.b_set - 27.0).abs() < 1e-9);
    }

    #[test]
    fn hydro_only_ignores_battery() {
        let plant = PlantConfig::default();
        let mut c = Controller::new(ControllerKind::HydroOnly, plant, Some(BessConfig::default()));
        let mut provider = OracleProvider::new(vec![0.05]);
        let upd = c.hour_boundary(0, 0.5, &[], &mut provider);
        assert_eq!(upd.b0, 0.0);
        let d = c.step(&Measurement { k: 0, f_meas: 49.9, h_meas: 27.0, bess: None });
        assert!((d.h_set - 39.5).abs() < 1e-9 && d.b_set == 0.0);
    }
}
