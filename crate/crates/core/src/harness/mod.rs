//! Scenario files, trace ingestion and generation, the closed-loop runner,
//! report files, battery sizing and forecast backtests.

pub mod backtest;
pub mod config;
pub mod runner;
pub mod sizing;
pub mod synth;
pub mod trace_io;

pub use backtest::{backtest_series, forecast_backtest, write_backtest_csv, BacktestRow};
pub use config::{ConfigError, ControllerChoice, ForecastChoice, Scenario, TraceSource};
pub use runner::{
    load_scenario_dir, matrix_to_dir, read_kpi_csv, run_matrix, run_on_trace, run_scenario, scenario_trace, simulate,
    write_kpi_csv, write_reductions_csv, write_runlog, RunError, RunOutput, RunTiming,
};
pub use sizing::size_bess;
pub use synth::{synth_trace, SynthParams};
pub use trace_io::{ingest_trace, read_trace, save_trace, write_trace, TraceIoError};

use std::path::Path;

use crate::domain::BessConfig;

/// The five runs of the standard comparison on one trace: hydro only, then
/// dead-band filter and double-layer MPC with a 5 kW/5 kWh and a 9 kW/9 kWh battery.
pub fn standard_matrix(base: &Scenario) -> Vec<Scenario> {
    let mut out = Vec::with_capacity(5);
    let mut hydro = base.clone();
    hydro.name = format!("{}_hydro_only", base.name);
    hydro.controller.kind = ControllerChoice::HydroOnly;
    hydro.bess = None;
    out.push(hydro);
    for kind in [ControllerChoice::Dbf, ControllerChoice::Dlmpc] {
        for size in [5.0, 9.0] {
            let mut s = base.clone();
            s.name = format!("{}_{}_{}kw", base.name, kind.name(), size);
            s.controller.kind = kind;
            s.controller.dbf_threshold_mhz = None;
            let bess = base.bess.clone().unwrap_or_default();
            s.bess = Some(BessConfig {
                capacity_kwh: size,
                max_charge_kw: size,
                max_discharge_kw: size,
                capability: crate::domain::CapabilityParams { b_rated: size, ..bess.capability.clone() },
                ..bess
            });
            out.push(s);
        }
    }
    out
}

/// Writes each scenario as `<name>.cfg` into `dir`.
pub fn write_scenarios(scenarios: &[Scenario], dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in scenarios {
        std::fs::write(dir.join(format!("{}.cfg", s.name)), s.to_config_string())?;
    }
    Ok(())
}
