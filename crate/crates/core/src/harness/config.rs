//! Scenario files: flat `key=value` lines with namespaced keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and falls back to its default; unknown and repeated keys are errors.
//! [`Scenario::to_config_string`] writes every key, so parsing its output
//! gives back the same scenario.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::control::{ControllerKind, Fidelity, LowerLayerParams};
use crate::domain::{validate_config, BessConfig, PlantConfig, ValidationReport};
use crate::forecast::{ModelKind, DEFAULT_AR_ORDER, DEFAULT_LEVEL};

use super::synth::SynthParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}: {reason}")]
    BadValue { line: usize, key: String, value: String, reason: String },
    #[error("invalid scenario:\n{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    HydroOnly,
    Dbf,
    Dlmpc,
}

impl ControllerChoice {
    pub fn name(self) -> &'static str {
        match self {
            ControllerChoice::HydroOnly => "hydro_only",
            ControllerChoice::Dbf => "dbf",
            ControllerChoice::Dlmpc => "dlmpc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hydro_only" => Some(ControllerChoice::HydroOnly),
            "dbf" => Some(ControllerChoice::Dbf),
            "dlmpc" => Some(ControllerChoice::Dlmpc),
            _ => None,
        }
    }
}

/// Controller keys in their file units.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub kind: ControllerChoice,
    /// DBF threshold in mHz; `None` derives it from the battery rating.
    pub dbf_threshold_mhz: Option<f64>,
    pub lower: LowerLayerParams,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self { kind: ControllerChoice::Dlmpc, dbf_threshold_mhz: None, lower: LowerLayerParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForecastChoice {
    Model(ModelKind),
    /// Realised hourly integrals, for reference runs.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSettings {
    pub model: ForecastChoice,
    pub ar_order: usize,
    pub level: f64,
    /// Hours of trace before the simulated segment used as forecast history.
    pub history_hours: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            model: ForecastChoice::Model(ModelKind::SeasonalAr),
            ar_order: DEFAULT_AR_ORDER,
            level: DEFAULT_LEVEL,
            history_hours: 336,
        }
    }
}

/// Scale factors applied to the battery truth model only.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSettings {
    pub resistance_scale: f64,
    pub capacity_scale: f64,
}

impl Default for TruthSettings {
    fn default() -> Self {
        Self { resistance_scale: 1.0, capacity_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub trace: TraceSource,
    pub seed: u64,
    pub duration_h: usize,
    pub output_dir: PathBuf,
    pub plant: PlantConfig,
    pub bess: Option<BessConfig>,
    pub controller: ControllerSettings,
    pub forecast: ForecastSettings,
    pub synth: SynthParams,
    pub truth: TruthSettings,
    /// Movement threshold for the servo KPIs, kW.
    pub eps_move_kw: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".to_string(),
            trace: TraceSource::Synth,
            seed: 1,
            duration_h: 12,
            output_dir: PathBuf::from("out"),
            plant: PlantConfig::default(),
            bess: Some(BessConfig::sized(9.0, 9.0)),
            controller: ControllerSettings::default(),
            forecast: ForecastSettings::default(),
            synth: SynthParams::default(),
            truth: TruthSettings::default(),
            eps_move_kw: 0.125,
        }
    }
}

impl Scenario {
    /// Controller as the runner builds it.
    pub fn controller_kind(&self) -> ControllerKind {
        match self.controller.kind {
            ControllerChoice::HydroOnly => ControllerKind::HydroOnly,
            ControllerChoice::Dbf => {
                let threshold_hz = match self.controller.dbf_threshold_mhz {
                    Some(mhz) => mhz / 1000.0,
                    None => self.bess.as_ref().map_or(0.0, |b| b.capability.b_rated / self.plant.sigma_f),
                };
                ControllerKind::Dbf { threshold_hz }
            }
            ControllerChoice::Dlmpc => ControllerKind::Dlmpc(self.controller.lower.clone()),
        }
    }

    /// Battery parameters seen by the plant truth model.
    pub fn truth_bess(&self) -> Option<BessConfig> {
        self.bess.as_ref().map(|b| {
            let mut t = b.clone();
            let s = self.truth.resistance_scale;
            t.ttc.r_s *= s;
            for br in &mut t.ttc.branches {
                br.0 *= s;
            }
            t.capacity_kwh *= self.truth.capacity_scale;
            t
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut report: ValidationReport = validate_config(&self.plant, self.bess.as_ref());
        let mut extra = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            extra.push("scenario.name: non-empty, no path separators".to_string());
        }
        if self.duration_h == 0 {
            extra.push("scenario.duration_h: at least 1".to_string());
        }
        if self.controller.kind != ControllerChoice::HydroOnly && self.bess.is_none() {
            extra.push("controller.kind: dbf and dlmpc need a battery".to_string());
        }
        let c = &self.controller.lower;
        if !(c.gamma >= 0.0 && c.gamma.is_finite()) {
            extra.push("controller.gamma: >= 0".to_string());
        }
        if c.horizon == 0 {
            extra.push("controller.horizon: at least 1".to_string());
        }
        if !(c.anchor_weight >= 0.0 && c.soe_margin >= 0.0 && c.eps_abs > 0.0) {
            extra.push("controller: anchor_weight >= 0, soe_margin >= 0, eps_abs > 0".to_string());
        }
        if let Some(t) = self.controller.dbf_threshold_mhz {
            if !(t > 0.0 && t.is_finite()) {
                extra.push("controller.dbf_threshold_mhz: > 0".to_string());
            }
        }
        if !(self.forecast.level > 0.5 && self.forecast.level < 1.0) {
            extra.push("forecast.level: in (0.5, 1)".to_string());
        }
        if !(self.truth.resistance_scale > 0.0 && self.truth.capacity_scale > 0.0) {
            extra.push("truth: scales > 0".to_string());
        }
        if !(self.eps_move_kw > 0.0) {
            extra.push("kpi.eps_move_kw: > 0".to_string());
        }
        if let Err(e) = self.synth.check() {
            extra.push(format!("synth: {e}"));
        }
        if report.is_valid() && extra.is_empty() {
            return Ok(());
        }
        let mut msg = String::new();
        for v in report.violations.drain(..) {
            let _ = writeln!(msg, "  {v}");
        }
        for e in extra {
            let _ = writeln!(msg, "  {e}");
        }
        Err(ConfigError::Invalid(msg))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Parses a scenario file. Values are not validated beyond their syntax.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = Scenario::default();
        let mut bess = s.bess.clone().unwrap_or_default();
        let mut bess_enabled = true;
        let mut seen = std::collections::HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((key, value)) = t.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: t.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            let v = Value { line, key, value };
            match key {
                "scenario.name" => s.name = value.to_string(),
                "scenario.trace" => {
                    s.trace = if value == "synth" { TraceSource::Synth } else { TraceSource::File(PathBuf::from(value)) }
                }
                "scenario.seed" => s.seed = v.parse()?,
                "scenario.duration_h" => s.duration_h = v.parse()?,
                "scenario.output_dir" => s.output_dir = PathBuf::from(value),

                "plant.sigma_f_kw_per_hz" => s.plant.sigma_f = v.parse()?,
                "plant.f_nominal_hz" => s.plant.f_nominal = v.parse()?,
                "plant.deadband_hz" => s.plant.deadband_f = v.parse()?,
                "plant.p_disp_kw" => s.plant.p_disp = v.list()?,
                "plant.h_min_kw" => s.plant.h_min = v.parse()?,
                "plant.h_max_kw" => s.plant.h_max = v.parse()?,
                "plant.h_dot_max_kw_per_s" => s.plant.h_dot_max = v.parse()?,
                "plant.tau_h_s" => s.plant.tau_h = v.parse()?,
                "plant.dt_s" => s.plant.dt = v.parse()?,

                "bess.enabled" => bess_enabled = v.parse()?,
                "bess.capacity_kwh" => bess.capacity_kwh = v.parse()?,
                "bess.max_charge_kw" => bess.max_charge_kw = v.parse()?,
                "bess.max_discharge_kw" => bess.max_discharge_kw = v.parse()?,
                "bess.soe_min" => bess.soe_min = v.parse()?,
                "bess.soe_max" => bess.soe_max = v.parse()?,
                "bess.soe_init" => bess.soe_init = v.parse()?,
                "bess.eta_ch" => bess.eta_ch = v.parse()?,
                "bess.eta_dch" => bess.eta_dch = v.parse()?,
                "bess.ttc_ocv0_v" => bess.ttc.ocv0 = v.parse()?,
                "bess.ttc_ocv_slope_v" => bess.ttc.ocv_slope = v.parse()?,
                "bess.ttc_r_s_ohm" => bess.ttc.r_s = v.parse()?,
                "bess.ttc_r1_ohm" => bess.ttc.branches[0].0 = v.parse()?,
                "bess.ttc_c1_f" => bess.ttc.branches[0].1 = v.parse()?,
                "bess.ttc_r2_ohm" => bess.ttc.branches[1].0 = v.parse()?,
                "bess.ttc_c2_f" => bess.ttc.branches[1].1 = v.parse()?,
                "bess.ttc_r3_ohm" => bess.ttc.branches[2].0 = v.parse()?,
                "bess.ttc_c3_f" => bess.ttc.branches[2].1 = v.parse()?,
                "bess.b_rated_kw" => bess.capability.b_rated = v.parse()?,
                "bess.v_dc_min_v" => bess.capability.v_dc_min = v.parse()?,
                "bess.v_dc_max_v" => bess.capability.v_dc_max = v.parse()?,
                "bess.soe_derate_band" => bess.capability.soe_derate_band = v.parse()?,

                "controller.kind" => {
                    s.controller.kind = ControllerChoice::parse(value).ok_or_else(|| v.bad("hydro_only|dbf|dlmpc"))?
                }
                "controller.dbf_threshold_mhz" => s.controller.dbf_threshold_mhz = v.auto()?,
                "controller.gamma" => s.controller.lower.gamma = v.parse()?,
                "controller.horizon" => s.controller.lower.horizon = v.parse()?,
                "controller.fidelity" => {
                    s.controller.lower.fidelity = Fidelity::parse(value).ok_or_else(|| v.bad("frozen|linearized"))?
                }
                "controller.anchor_weight" => s.controller.lower.anchor_weight = v.parse()?,
                "controller.soe_margin" => s.controller.lower.soe_margin = v.parse()?,
                "controller.eps_abs" => s.controller.lower.eps_abs = v.parse()?,
                "controller.max_iter" => s.controller.lower.max_iter = v.parse()?,

                "forecast.model" => {
                    s.forecast.model = if value == "oracle" {
                        ForecastChoice::Oracle
                    } else {
                        ForecastChoice::Model(
                            ModelKind::parse(value)
                                .ok_or_else(|| v.bad("persistence|seasonal_naive24|ar|seasonal_ar|oracle"))?,
                        )
                    }
                }
                "forecast.ar_order" => s.forecast.ar_order = v.parse()?,
                "forecast.level" => s.forecast.level = v.parse()?,
                "forecast.history_hours" => s.forecast.history_hours = v.parse()?,

                "synth.std_mhz" => s.synth.std_mhz = v.parse()?,
                "synth.theta_per_s" => s.synth.theta_per_s = v.parse()?,
                "synth.daily_amp_mhz" => s.synth.daily_amp_mhz = v.parse()?,
                "synth.split_start_h" => s.synth.split_start_h = v.parse()?,
                "synth.split_duration_h" => s.synth.split_duration_h = v.parse()?,
                "synth.split_offset_mhz" => s.synth.split_offset_mhz = v.parse()?,

                "truth.resistance_scale" => s.truth.resistance_scale = v.parse()?,
                "truth.capacity_scale" => s.truth.capacity_scale = v.parse()?,

                "kpi.eps_move_kw" => s.eps_move_kw = v.parse()?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        s.bess = bess_enabled.then_some(bess);
        Ok(s)
    }

    /// Every key with its current value, one per line.
    pub fn to_config_string(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k}={v}");
        };
        kv("scenario.name", self.name.clone());
        kv(
            "scenario.trace",
            match &self.trace {
                TraceSource::Synth => "synth".to_string(),
                TraceSource::File(p) => p.display().to_string(),
            },
        );
        kv("scenario.seed", self.seed.to_string());
        kv("scenario.duration_h", self.duration_h.to_string());
        kv("scenario.output_dir", self.output_dir.display().to_string());

        let p = &self.plant;
        kv("plant.sigma_f_kw_per_hz", p.sigma_f.to_string());
        kv("plant.f_nominal_hz", p.f_nominal.to_string());
        kv("plant.deadband_hz", p.deadband_f.to_string());
        kv("plant.p_disp_kw", p.p_disp.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        kv("plant.h_min_kw", p.h_min.to_string());
        kv("plant.h_max_kw", p.h_max.to_string());
        kv("plant.h_dot_max_kw_per_s", p.h_dot_max.to_string());
        kv("plant.tau_h_s", p.tau_h.to_string());
        kv("plant.dt_s", p.dt.to_string());

        kv("bess.enabled", self.bess.is_some().to_string());
        if let Some(b) = &self.bess {
            kv("bess.capacity_kwh", b.capacity_kwh.to_string());
            kv("bess.max_charge_kw", b.max_charge_kw.to_string());
            kv("bess.max_discharge_kw", b.max_discharge_kw.to_string());
            kv("bess.soe_min", b.soe_min.to_string());
            kv("bess.soe_max", b.soe_max.to_string());
            kv("bess.soe_init", b.soe_init.to_string());
            kv("bess.eta_ch", b.eta_ch.to_string());
            kv("bess.eta_dch", b.eta_dch.to_string());
            kv("bess.ttc_ocv0_v", b.ttc.ocv0.to_string());
            kv("bess.ttc_ocv_slope_v", b.ttc.ocv_slope.to_string());
            kv("bess.ttc_r_s_ohm", b.ttc.r_s.to_string());
            for (i, (r, c)) in b.ttc.branches.iter().enumerate() {
                kv(&format!("bess.ttc_r{}_ohm", i + 1), r.to_string());
                kv(&format!("bess.ttc_c{}_f", i + 1), c.to_string());
            }
            kv("bess.b_rated_kw", b.capability.b_rated.to_string());
            kv("bess.v_dc_min_v", b.capability.v_dc_min.to_string());
            kv("bess.v_dc_max_v", b.capability.v_dc_max.to_string());
            kv("bess.soe_derate_band", b.capability.soe_derate_band.to_string());
        }

        let c = &self.controller;
        kv("controller.kind", c.kind.name().to_string());
        kv("controller.dbf_threshold_mhz", c.dbf_threshold_mhz.map_or("auto".to_string(), |t| t.to_string()));
        kv("controller.gamma", c.lower.gamma.to_string());
        kv("controller.horizon", c.lower.horizon.to_string());
        kv("controller.fidelity", c.lower.fidelity.name().to_string());
        kv("controller.anchor_weight", c.lower.anchor_weight.to_string());
        kv("controller.soe_margin", c.lower.soe_margin.to_string());
        kv("controller.eps_abs", c.lower.eps_abs.to_string());
        kv("controller.max_iter", c.lower.max_iter.to_string());

        let f = &self.forecast;
        kv(
            "forecast.model",
            match f.model {
                ForecastChoice::Oracle => "oracle".to_string(),
                ForecastChoice::Model(m) => m.name().to_string(),
            },
        );
        kv("forecast.ar_order", f.ar_order.to_string());
        kv("forecast.level", f.level.to_string());
        kv("forecast.history_hours", f.history_hours.to_string());

        let y = &self.synth;
        kv("synth.std_mhz", y.std_mhz.to_string());
        kv("synth.theta_per_s", y.theta_per_s.to_string());
        kv("synth.daily_amp_mhz", y.daily_amp_mhz.to_string());
        kv("synth.split_start_h", y.split_start_h.to_string());
        kv("synth.split_duration_h", y.split_duration_h.to_string());
        kv("synth.split_offset_mhz", y.split_offset_mhz.to_string());

        kv("truth.resistance_scale", self.truth.resistance_scale.to_string());
        kv("truth.capacity_scale", self.truth.capacity_scale.to_string());
        kv("kpi.eps_move_kw", self.eps_move_kw.to_string());
        o
    }
}

struct Value<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Value<'_> {
    fn bad(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.line,
            key: self.key.to_string(),
            value: self.value.to_string(),
            reason: reason.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e: T::Err| self.bad(e.to_string()))
    }

    fn list(&self) -> Result<Vec<f64>, ConfigError> {
        self.value
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| self.bad(e.to_string())))
            .collect()
    }

    fn auto(&self) -> Result<Option<f64>, ConfigError> {
        if self.value == "auto" {
            Ok(None)
        } else {
            self.parse().map(Some)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let s = Scenario::default();
        assert_eq!(Scenario::parse(&s.to_config_string()).unwrap(), s);
        s.validate().unwrap();
    }

    #[test]
    fn partial_file_uses_defaults() {
        let s = Scenario::parse("# comment\n\ncontroller.kind=dbf\ncontroller.dbf_threshold_mhz=40\nplant.p_disp_kw=27, 30\n")
            .unwrap();
        assert_eq!(s.controller.kind, ControllerChoice::Dbf);
        assert_eq!(s.plant.p_disp, vec![27.0, 30.0]);
        assert_eq!(s.controller_kind(), ControllerKind::Dbf { threshold_hz: 0.04 });
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let err = Scenario::parse("scenario.name=a\ncontroller.gama=0.4\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 2, ref key } if key == "controller.gama"));
    }

    #[test]
    fn bad_values_and_duplicates() {
        assert!(matches!(Scenario::parse("controller.gamma=abc"), Err(ConfigError::BadValue { line: 1, .. })));
        assert!(matches!(Scenario::parse("controller.kind=pid"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(Scenario::parse("a.b=1\n").unwrap_err(), ConfigError::UnknownKey { .. }));
        assert!(matches!(Scenario::parse("no equals sign"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(
            Scenario::parse("scenario.seed=1\nscenario.seed=2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn hydro_only_without_battery() {
        let s = Scenario::parse("controller.kind=hydro_only\nbess.enabled=false\n").unwrap();
        assert!(s.bess.is_none());
        s.validate().unwrap();
        let text = s.to_config_string();
        assert!(!text.contains("bess.capacity_kwh"));
        assert_eq!(Scenario::parse(&text).unwrap(), s);
    }

    #[test]
    fn validation_collects_everything() {
        let s = Scenario::parse("bess.enabled=false\nplant.h_min_kw=60\nscenario.duration_h=0\n").unwrap();
        let ConfigError::Invalid(msg) = s.validate().unwrap_err() else { panic!() };
        assert!(msg.contains("H_min < H_max"));
        assert!(msg.contains("duration_h"));
        assert!(msg.contains("need a battery"));
    }

    #[test]
    fn truth_perturbation_touches_truth_only() {
        let mut s = Scenario::default();
        s.truth.resistance_scale = 1.2;
        s.truth.capacity_scale = 0.8;
        let t = s.truth_bess().unwrap();
        let b = s.bess.as_ref().unwrap();
        assert!((t.ttc.r_s - 1.2 * b.ttc.r_s).abs() < 1e-15);
        assert!((t.capacity_kwh - 0.8 * b.capacity_kwh).abs() < 1e-12);
        assert_eq!(t.ttc.branches[0].1, b.ttc.branches[0].1);
    }
}
