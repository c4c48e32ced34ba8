//! Shared domain types: frequency traces, plant and battery configuration,
//! per-step decisions and configuration validation.
//!
//! Sign conventions are fixed crate-wide: hydro power `H` is positive when
//! generating, battery power `B` is positive when charging, so the power
//! injected at the point of common coupling is `H - B`.

use std::fmt;

use thiserror::Error;

/// Lowest frequency accepted in a trace (Hz); anything below is treated as corrupt.
pub const F_MIN_VALID: f64 = 45.0;
/// Highest frequency accepted in a trace (Hz).
pub const F_MAX_VALID: f64 = 55.0;
/// Seconds per hour.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("trace needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("sample interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("sample {index} = {value} Hz is outside [{F_MIN_VALID}, {F_MAX_VALID}] Hz")]
    OutOfRange { index: usize, value: f64 },
}

/// Uniformly sampled grid frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    t0: i64,
    dt: f64,
    samples: Vec<f64>,
}

impl FrequencyTrace {
    /// Builds a trace starting at `t0` (UTC seconds) with sample interval `dt`.
    pub fn new(t0: i64, dt: f64, samples: Vec<f64>) -> Result<Self, TraceError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TraceError::BadInterval(dt));
        }
        if samples.len() < 2 {
            return Err(TraceError::TooShort(samples.len()));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, f)| !(F_MIN_VALID..=F_MAX_VALID).contains(*f))
        {
            return Err(TraceError::OutOfRange { index, value });
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Timestamp of sample `i` in UTC seconds (fractional for sub-second `dt`).
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 as f64 + i as f64 * self.dt
    }

    /// Sub-trace `[start, end)`; `None` when the slice would hold fewer than 2 samples.
    pub fn slice(&self, start: usize, end: usize) -> Option<Self> {
        let end = end.min(self.samples.len());
        if start >= end || end - start < 2 {
            return None;
        }
        let t0 = self.t0 + (start as f64 * self.dt).round() as i64;
        Some(Self { t0, dt: self.dt, samples: self.samples[start..end].to_vec() })
    }
}

/// Hydro unit and FCR service parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    /// Droop in kW/Hz.
    pub sigma_f: f64,
    /// Nominal grid frequency in Hz.
    pub f_nominal: f64,
    /// Governor dead band on the frequency deviation, Hz.
    pub deadband_f: f64,
    /// Hourly dispatch plan in kW at the PCC. A single value means a flat plan.
    pub p_disp: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
    /// Ramp limit on the hydro output, kW/s.
    pub h_dot_max: f64,
    /// First-order time constant of the hydro power response, s.
    pub tau_h: f64,
    /// Control step, s.
    pub dt: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            sigma_f: 125.0,
            f_nominal: 50.0,
            deadband_f: 0.002,
            p_disp: vec![27.0],
            // Reduced-scale minimum output is not published; 5 kW is a placeholder.
            h_min: 5.0,
            h_max: 50.0,
            h_dot_max: 5.0,
            tau_h: 1.5,
            dt: 1.0,
        }
    }
}

impl PlantConfig {
    /// Dispatch for hour `g` counted from the start of the run.
    pub fn dispatch_at_hour(&self, g: usize) -> f64 {
        match self.p_disp.len() {
            0 => 0.0,
            1 => self.p_disp[0],
            n => self.p_disp[g.min(n - 1)],
        }
    }

    /// Number of control steps per hour.
    pub fn steps_per_hour(&self) -> usize {
        (SECONDS_PER_HOUR / self.dt).round() as usize
    }
}

/// Three-time-constant equivalent circuit of the battery pack.
#[derive(Debug, Clone, PartialEq)]
pub struct TtcParams {
    /// Open-circuit voltage at SOE = 0, V.
    pub ocv0: f64,
    /// Linear OCV slope over the full SOE range, V.
    pub ocv_slope: f64,
    /// Series resistance, ohm.
    pub r_s: f64,
    /// RC branches as (R ohm, C farad).
    pub branches: [(f64, f64); 3],
}

impl Default for TtcParams {
    fn default() -> Self {
        // Synthetic pack; time constants 10 s, 150 s and 2000 s.
        Self {
            ocv0: 620.0,
            ocv_slope: 60.0,
            r_s: 0.05,
            branches: [(0.02, 500.0), (0.03, 5000.0), (0.04, 50000.0)],
        }
    }
}

impl TtcParams {
    pub fn ocv(&self, soe: f64) -> f64 {
        self.ocv0 + self.ocv_slope * soe
    }

    /// Lossless cell: no resistance anywhere.
    pub fn ideal() -> Self {
        Self { r_s: 0.0, branches: [(0.0, 500.0), (0.0, 5000.0), (0.0, 50000.0)], ..Self::default() }
    }
}

/// Converter capability curve parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityParams {
    /// Apparent power bound of the converter, kW.
    pub b_rated: f64,
    pub v_dc_min: f64,
    pub v_dc_max: f64,
    /// SOE width over which power derates linearly to zero at each SOE limit.
    /// Zero means a hard cut-off at the limit.
    pub soe_derate_band: f64,
}

impl Default for CapabilityParams {
    fn default() -> Self {
        Self { b_rated: 9.0, v_dc_min: 600.0, v_dc_max: 700.0, soe_derate_band: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BessConfig {
    /// Energy capacity, kWh.
    pub capacity_kwh: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
    pub soe_min: f64,
    pub soe_max: f64,
    /// SOE at the start of a run.
    pub soe_init: f64,
    pub eta_ch: f64,
    pub eta_dch: f64,
    pub ttc: TtcParams,
    pub capability: CapabilityParams,
}

impl Default for BessConfig {
    fn default() -> Self {
        Self::sized(9.0, 9.0)
    }
}

impl BessConfig {
    /// Default battery with the given power (kW) and energy (kWh) ratings.
    pub fn sized(power_kw: f64, energy_kwh: f64) -> Self {
        Self {
            capacity_kwh: energy_kwh,
            max_charge_kw: power_kw,
            max_discharge_kw: power_kw,
            soe_min: 0.1,
            soe_max: 0.9,
            soe_init: 0.5,
            eta_ch: 0.97,
            eta_dch: 0.97,
            ttc: TtcParams::default(),
            capability: CapabilityParams { b_rated: power_kw, ..CapabilityParams::default() },
        }
    }

    /// Power at the DC bus for an AC set-point (both kW, positive charging).
    pub fn ac_to_dc(&self, b_ac: f64) -> f64 {
        if b_ac >= 0.0 {
            b_ac * self.eta_ch
        } else {
            b_ac / self.eta_dch
        }
    }
}

/// Solver outcome attached to a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionStatus {
    /// Rule-based controller, no optimisation involved.
    #[default]
    Direct,
    Solved,
    /// The optimiser failed and a dead-band split was used for this step.
    Fallback,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub status: DecisionStatus,
    pub objective: f64,
    pub iterations: usize,
    /// Battery set-point was clipped to the capability box.
    pub battery_clipped: bool,
    /// Hydro set-point was clamped to `[h_min, h_max]`.
    pub hydro_clamped: bool,
    /// Short tags naming constraints that were active in the optimum.
    pub active: Vec<&'static str>,
}

/// Set-points actuated at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub k: usize,
    pub h_set: f64,
    /// Battery AC set-point, positive charging.
    pub b_set: f64,
    /// Droop-implied PCC target.
    pub p_set: f64,
    /// Realized tracking error, filled in once the plant has stepped.
    pub te: f64,
    pub diagnostics: Diagnostics,
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn check(&mut self, ok: bool, field: &'static str, rule: &'static str) {
        if !ok {
            self.violations.push(Violation { field, rule });
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn finite_all(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Checks every plant invariant and, when present, every battery invariant.
pub fn validate_config(plant: &PlantConfig, bess: Option<&BessConfig>) -> ValidationReport {
    let mut r = ValidationReport::default();
    let p = plant;
    r.check(
        finite_all(&[p.sigma_f, p.f_nominal, p.deadband_f, p.h_min, p.h_max, p.h_dot_max, p.tau_h, p.dt])
            && finite_all(&p.p_disp),
        "plant",
        "all values finite",
    );
    r.check(p.sigma_f > 0.0, "plant.sigma_f", "sigma_f > 0");
    r.check(p.f_nominal > 0.0, "plant.f_nominal", "f_nominal > 0");
    r.check(p.deadband_f >= 0.0, "plant.deadband_f", "deadband_f >= 0");
    r.check(p.h_min < p.h_max, "plant.h_min", "H_min < H_max");
    r.check(p.h_dot_max > 0.0, "plant.h_dot_max", "H_dot_max > 0");
    r.check(p.dt > 0.0, "plant.dt", "dt > 0");
    r.check(p.tau_h > p.dt / 2.0, "plant.tau_h", "tau_H > dt/2");
    r.check(!p.p_disp.is_empty(), "plant.p_disp", "P_disp not empty");
    r.check(
        p.p_disp.iter().all(|&d| d >= p.h_min && d <= p.h_max),
        "plant.p_disp",
        "P_disp within [H_min, H_max]",
    );
    if p.dt > 0.0 {
        let n = SECONDS_PER_HOUR / p.dt;
        r.check((n - n.round()).abs() < 1e-9, "plant.dt", "dt divides one hour");
    }

    if let Some(b) = bess {
        r.check(
            finite_all(&[
                b.capacity_kwh,
                b.max_charge_kw,
                b.max_discharge_kw,
                b.soe_min,
                b.soe_max,
                b.soe_init,
                b.eta_ch,
                b.eta_dch,
            ]),
            "bess",
            "all values finite",
        );
        r.check(b.capacity_kwh > 0.0, "bess.capacity_kwh", "C_B > 0");
        r.check(b.max_charge_kw >= 0.0, "bess.max_charge_kw", "B_max_charge >= 0");
        r.check(b.max_discharge_kw >= 0.0, "bess.max_discharge_kw", "B_max_discharge >= 0");
        r.check(b.soe_min >= 0.0 && b.soe_max <= 1.0, "bess.soe", "SOE limits within [0, 1]");
        r.check(b.soe_min < b.soe_max, "bess.soe", "SOE_min < SOE_max");
        r.check((0.0..=1.0).contains(&b.soe_init), "bess.soe_init", "SOE_init within [0, 1]");
        for (field, eta) in [("bess.eta_ch", b.eta_ch), ("bess.eta_dch", b.eta_dch)] {
            r.check(eta > 0.5 && eta <= 1.0, field, "efficiency in (0.5, 1]");
        }

        let t = &b.ttc;
        r.check(t.ocv0 > 0.0, "bess.ttc.ocv0", "ocv0 > 0");
        r.check(t.ocv_slope.is_finite(), "bess.ttc.ocv_slope", "ocv_slope finite");
        r.check(
            t.r_s >= 0.0 && t.branches.iter().all(|&(rr, _)| rr >= 0.0),
            "bess.ttc",
            "resistances >= 0",
        );
        r.check(t.branches.iter().all(|&(_, c)| c > 0.0), "bess.ttc", "capacitances > 0");

        let c = &b.capability;
        r.check(c.b_rated > 0.0, "bess.capability.b_rated", "B_rated > 0");
        r.check(c.v_dc_min < c.v_dc_max, "bess.capability.v_dc", "v_dc_min < v_dc_max");
        r.check(
            (0.0..=0.2).contains(&c.soe_derate_band),
            "bess.capability.soe_derate_band",
            "soe_derate_band in [0, 0.2]",
        );
        r.check(
            t.ocv(b.soe_min) > c.v_dc_min && t.ocv(b.soe_max) < c.v_dc_max,
            "bess.capability.v_dc",
            "OCV over [SOE_min, SOE_max] inside the DC window",
        );
    }
    r
}
