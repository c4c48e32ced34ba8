//! Closed-loop simulation of one scenario and the CSV files it produces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::control::{Controller, Measurement};
use crate::domain::{DecisionStatus, FrequencyTrace, SECONDS_PER_HOUR};
use crate::forecast::{ForecastProvider, ModelProvider, OracleProvider, WForecast};
use crate::kpi::{compare, compute_kpis, KpiError, KpiReport, LogRow, Reduction, RunLog, COMPARED, KPI_COLUMNS};
use crate::plant::{bess_step, hydro_step, BessState, HydroState, PlantError};

use super::config::{ConfigError, ForecastChoice, Scenario, TraceSource};
use super::synth::synth_trace;
use super::trace_io::{ingest_trace, TraceIoError};

/// Controller step budget at horizon 30, milliseconds.
pub const STEP_BUDGET_MS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace: {0}")]
    Trace(#[from] TraceIoError),
    #[error("trace holds {got} samples, the run needs {needed}")]
    TraceTooShort { needed: usize, got: usize },
    #[error("trace interval {trace} s differs from the control step {plant} s")]
    StepMismatch { trace: f64, plant: f64 },
    #[error("run {name} aborted at step {k}: {source}")]
    Aborted { name: String, k: usize, source: PlantError, partial: Box<RunOutput> },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Kpi(#[from] KpiError),
}

impl RunError {
    /// Process exit code for the command line: 2 for bad input, 3 for an aborted run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Aborted { .. } => 3,
            RunError::Io { .. } => 1,
            _ => 2,
        }
    }
}

/// Upper-layer bookkeeping for one simulated hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub g: usize,
    pub soe_start: f64,
    pub b0: f64,
    pub forecast: Option<WForecast>,
    pub w_realised: f64,
    pub ul_feasible: bool,
    pub forecast_fallback: bool,
}

/// Wall-clock statistics of the controller step. Never written to the CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunTiming {
    pub total_s: f64,
    pub mean_step_ms: f64,
    pub p99_step_ms: f64,
    pub max_step_ms: f64,
}

impl RunTiming {
    fn from_steps(mut ms: Vec<f64>, total_s: f64) -> Self {
        if ms.is_empty() {
            return Self { total_s, ..Self::default() };
        }
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        ms.sort_by(f64::total_cmp);
        let p99 = ms[((ms.len() - 1) as f64 * 0.99).round() as usize];
        Self { total_s, mean_step_ms: mean, p99_step_ms: p99, max_step_ms: ms[ms.len() - 1] }
    }

    /// 99th percentile controller step below [`STEP_BUDGET_MS`].
    pub fn within_budget(&self) -> bool {
        self.p99_step_ms < STEP_BUDGET_MS
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub log: RunLog,
    pub kpi: KpiReport,
    pub hours: Vec<HourRecord>,
    pub ul_calls: usize,
    pub timing: RunTiming,
}

/// Trace used by the scenario and the index where the simulated segment starts.
///
/// Synthetic traces get `forecast.history_hours` of lead-in, with the split
/// segment placed relative to the simulated part. File traces run over their
/// last `duration_h` hours and everything before serves as history.
pub fn scenario_trace(s: &Scenario) -> Result<(FrequencyTrace, usize), RunError> {
    let sph = s.plant.steps_per_hour();
    let needed = s.duration_h * sph;
    let trace = match &s.trace {
        TraceSource::Synth => {
            let hist = s.forecast.history_hours;
            let params = s.synth.with_split(
                s.synth.split_start_h + hist as f64,
                s.synth.split_duration_h,
                s.synth.split_offset_mhz,
            );
            synth_trace(s.seed, hist + s.duration_h, &params)
        }
        TraceSource::File(p) => ingest_trace(p)?,
    };
    if (trace.dt() - s.plant.dt).abs() > 1e-9 {
        return Err(RunError::StepMismatch { trace: trace.dt(), plant: s.plant.dt });
    }
    if trace.len() < needed {
        return Err(RunError::TraceTooShort { needed, got: trace.len() });
    }
    let start = trace.len() - needed;
    Ok((trace, start))
}

fn hour_integral(samples: &[f64], f_nominal: f64, dt: f64) -> f64 {
    samples.iter().map(|f| (f_nominal - f) * dt).sum::<f64>() / SECONDS_PER_HOUR
}

fn provider_for(s: &Scenario, realised: &[f64]) -> Box<dyn ForecastProvider> {
    match s.forecast.model {
        ForecastChoice::Model(kind) => Box::new(ModelProvider::new(kind, s.forecast.ar_order, s.forecast.level)),
        ForecastChoice::Oracle => Box::new(OracleProvider::new(realised.to_vec())),
    }
}

/// Runs a validated scenario on its own trace.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput, RunError> {
    s.validate()?;
    let (trace, start) = scenario_trace(s)?;
    run_on_trace(s, &trace, start)
}

/// Runs `s` on `trace`, simulating `duration_h` hours from sample `start`.
pub fn run_on_trace(s: &Scenario, trace: &FrequencyTrace, start: usize) -> Result<RunOutput, RunError> {
    let plant = &s.plant;
    let dt = plant.dt;
    let sph = plant.steps_per_hour();
    let n = s.duration_h * sph;
    let samples = trace.samples();
    if start + n > samples.len() {
        return Err(RunError::TraceTooShort { needed: start + n, got: samples.len() });
    }

    let mut history: Vec<f64> = (0..start / sph)
        .rev()
        .map(|h| {
            let a = start - (h + 1) * sph;
            hour_integral(&samples[a..a + sph], plant.f_nominal, dt)
        })
        .collect();
    let realised: Vec<f64> = (0..s.duration_h)
        .map(|g| hour_integral(&samples[start + g * sph..start + (g + 1) * sph], plant.f_nominal, dt))
        .collect();
    let mut provider = provider_for(s, &realised);

    let truth = s.truth_bess();
    let mut controller = Controller::new(s.controller_kind(), plant.clone(), s.bess.clone());
    let mut hydro = HydroState { h: plant.dispatch_at_hour(0) };
    let mut bess = truth.as_ref().map(|b| BessState::at_rest(b.soe_init, b));

    let mut log = RunLog::new(dt);
    log.rows.reserve(n);
    let mut hours = Vec::with_capacity(s.duration_h);
    let mut step_ms = Vec::with_capacity(n);
    let started = Instant::now();

    let finish = |log: RunLog, hours: Vec<HourRecord>, step_ms: Vec<f64>, started: Instant| {
        let kpi = compute_kpis(&log, &s.name, s.controller.kind.name(), s.bess.as_ref(), s.eps_move_kw);
        RunOutput {
            name: s.name.clone(),
            log,
            kpi,
            ul_calls: hours.len(),
            hours,
            timing: RunTiming::from_steps(step_ms, started.elapsed().as_secs_f64()),
        }
    };

    for k in 0..n {
        if k % sph == 0 {
            let g = k / sph;
            let soe = bess.map_or(f64::NAN, |b| b.soe);
            let upd = controller.hour_boundary(g, soe, &history, provider.as_mut());
            hours.push(HourRecord {
                g,
                soe_start: soe,
                b0: upd.b0,
                forecast: upd.forecast,
                w_realised: realised[g],
                ul_feasible: upd.upper.is_none_or(|u| u.feasible),
                forecast_fallback: upd.forecast_fallback,
            });
        }

        let f = samples[start + k];
        let t = Instant::now();
        let d = controller.step(&Measurement { k, f_meas: f, h_meas: hydro.h, bess });
        step_ms.push(t.elapsed().as_secs_f64() * 1e3);

        hydro = hydro_step(hydro, d.h_set, plant);
        let (b, soe, v_dc, clipped, saturated) = match (bess, truth.as_ref()) {
            (Some(state), Some(cfg)) => match bess_step(&state, d.b_set, cfg, dt) {
                Ok(st) => {
                    bess = Some(st.state);
                    (st.b_applied, st.state.soe, st.state.v_dc, st.clipped, st.soe_saturated)
                }
                Err(source) => {
                    let partial = finish(log, hours, step_ms, started);
                    return Err(RunError::Aborted { name: s.name.clone(), k, source, partial: Box::new(partial) });
                }
            },
            _ => (0.0, f64::NAN, f64::NAN, false, false),
        };
        log.rows.push(LogRow {
            k,
            f,
            p_set: d.p_set,
            h_set: d.h_set,
            h: hydro.h,
            b_set: d.b_set,
            b,
            soe,
            v_dc,
            b0: controller.b0(),
            status: d.diagnostics.status,
            battery_clipped: d.diagnostics.battery_clipped || clipped,
            hydro_clamped: d.diagnostics.hydro_clamped,
            soe_saturated: saturated,
        });

        if (k + 1) % sph == 0 {
            history.push(realised[k / sph]);
        }
    }
    Ok(finish(log, hours, step_ms, started))
}

fn status_name(s: DecisionStatus) -> &'static str {
    match s {
        DecisionStatus::Direct => "direct",
        DecisionStatus::Solved => "solved",
        DecisionStatus::Fallback => "fallback",
    }
}

pub const RUNLOG_COLUMNS: [&str; 15] = [
    "k", "f_hz", "p_set_kw", "h_set_kw", "h_kw", "b_set_kw", "b_kw", "soe", "v_dc_v", "b0_kw", "status",
    "battery_clipped", "hydro_clamped", "soe_saturated", "te_kw",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Io { path: path.to_path_buf(), source: e.into() }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

pub fn write_runlog<W: Write>(log: &RunLog, w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(RUNLOG_COLUMNS)?;
    for r in &log.rows {
        w.write_record([
            r.k.to_string(),
            format!("{:.6}", r.f),
            format!("{:.6}", r.p_set),
            format!("{:.6}", r.h_set),
            format!("{:.6}", r.h),
            format!("{:.6}", r.b_set),
            format!("{:.6}", r.b),
            format!("{:.6}", r.soe),
            format!("{:.3}", r.v_dc),
            format!("{:.6}", r.b0),
            status_name(r.status).to_string(),
            u8::from(r.battery_clipped).to_string(),
            u8::from(r.hydro_clamped).to_string(),
            u8::from(r.soe_saturated).to_string(),
            format!("{:.6}", r.p_set - (r.h - r.b)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_kpi_csv<W: Write>(reports: &[KpiReport], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(KPI_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T, csv::Error> {
    rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
        csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("line {line}: bad or missing field {}", KPI_COLUMNS[i]),
        ))
    })
}

/// Reads a KPI CSV back. Columns not in the file format (CDF, SOE extremes) come back empty.
pub fn read_kpi_csv<R: std::io::Read>(r: R) -> Result<Vec<KpiReport>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(KPI_COLUMNS.iter().copied()) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("header must be {}", KPI_COLUMNS.join(",")),
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(KpiReport {
            run_id: rec[0].to_string(),
            controller: rec[1].to_string(),
            bess_kw: parse_field(&rec, 2, line)?,
            te_rms_1s: parse_field(&rec, 3, line)?,
            e10: parse_field(&rec, 4, line)?,
            e30: parse_field(&rec, 5, line)?,
            e60: parse_field(&rec, 6, line)?,
            mileage: parse_field(&rec, 7, line)?,
            nom: parse_field(&rec, 8, line)?,
            dh_p95: parse_field(&rec, 9, line)?,
            dh_cdf: Vec::new(),
            soe_viol: parse_field(&rec, 10, line)?,
            soe_min_seen: f64::NAN,
            soe_max_seen: f64::NAN,
            fallbacks: parse_field(&rec, 11, line)?,
        });
    }
    Ok(out)
}

pub fn write_reductions_csv<W: Write>(rows: &[Reduction], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["run_id", "controller", "bess_kw"];
    header.extend(COMPARED.iter().map(|c| *c));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.run_id.clone(), r.controller.clone(), r.bess_kw.to_string()];
        rec.extend(r.change.iter().map(|c| format!("{c:.2}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn runlog_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("runlog_{name}.csv"))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

pub fn save_runlog(log: &RunLog, path: &Path) -> Result<(), RunError> {
    write_runlog(log, create(path)?).map_err(csv_err(path))
}

pub fn save_kpis(reports: &[KpiReport], path: &Path) -> Result<(), RunError> {
    write_kpi_csv(reports, create(path)?).map_err(csv_err(path))
}

pub fn save_reductions(rows: &[Reduction], path: &Path) -> Result<(), RunError> {
    write_reductions_csv(rows, create(path)?).map_err(csv_err(path))
}

/// Runs one scenario and writes `runlog_<name>.csv` and `kpi.csv` to its output directory.
/// An aborted run still writes its partial log.
pub fn simulate(s: &Scenario) -> Result<RunOutput, RunError> {
    match run_scenario(s) {
        Ok(out) => {
            save_runlog(&out.log, &runlog_path(&s.output_dir, &s.name))?;
            save_kpis(std::slice::from_ref(&out.kpi), &s.output_dir.join("kpi.csv"))?;
            Ok(out)
        }
        Err(RunError::Aborted { name, k, source, partial }) => {
            save_runlog(&partial.log, &runlog_path(&s.output_dir, &s.name))?;
            Err(RunError::Aborted { name, k, source, partial })
        }
        Err(e) => Err(e),
    }
}

/// Result of a batch of scenarios.
#[derive(Debug)]
pub struct MatrixOutput {
    pub runs: Vec<RunOutput>,
    pub reductions: Option<Vec<Reduction>>,
}

/// Runs scenarios in parallel; results keep the input order.
pub fn run_matrix(scenarios: &[Scenario]) -> Vec<Result<RunOutput, RunError>> {
    scenarios.par_iter().map(run_scenario).collect()
}

/// Runs a matrix and writes every runlog plus `kpi.csv` and, when a
/// hydro-only run is present (or `baseline` names one), `reductions.csv`.
pub fn matrix_to_dir(scenarios: &[Scenario], out_dir: &Path, baseline: Option<&str>) -> Result<MatrixOutput, RunError> {
    let mut runs = Vec::with_capacity(scenarios.len());
    for (s, r) in scenarios.iter().zip(run_matrix(scenarios)) {
        let out = r?;
        save_runlog(&out.log, &runlog_path(out_dir, &s.name))?;
        runs.push(out);
    }
    let reports: Vec<KpiReport> = runs.iter().map(|r| r.kpi.clone()).collect();
    save_kpis(&reports, &out_dir.join("kpi.csv"))?;
    let base = baseline
        .map(str::to_string)
        .or_else(|| reports.iter().find(|r| r.controller == "hydro_only").map(|r| r.run_id.clone()));
    let reductions = match base {
        Some(b) => {
            let rows = compare(&reports, &b)?;
            save_reductions(&rows, &out_dir.join("reductions.csv"))?;
            Some(rows)
        }
        None => None,
    };
    Ok(MatrixOutput { runs, reductions })
}

/// Loads every `*.cfg` in `dir`, sorted by file name.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>, RunError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let mut s = Scenario::load(&p)?;
        if let TraceSource::File(t) = &s.trace {
            if t.is_relative() {
                s.trace = TraceSource::File(dir.join(t));
            }
        }
        out.push(s);
    }
    Ok(out)
}
