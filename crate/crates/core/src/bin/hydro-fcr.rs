use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hydro_fcr::harness::runner::{save_reductions, STEP_BUDGET_MS};
use hydro_fcr::harness::{
    forecast_backtest, ingest_trace, load_scenario_dir, matrix_to_dir, read_kpi_csv, simulate, size_bess, synth_trace,
    write_backtest_csv, write_trace, RunError, RunOutput, Scenario, SynthParams,
};
use hydro_fcr::kpi::{compare, reduction_table};

#[derive(Parser)]
#[command(name = "hydro-fcr", version, about = "Hydro plus battery frequency containment: simulation and reports")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file; writes runlog_<name>.csv and kpi.csv.
    Simulate {
        scenario: PathBuf,
        /// Overrides controller.gamma.
        #[arg(long)]
        gamma: Option<f64>,
        /// Overrides scenario.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.cfg in a directory; writes runlogs, kpi.csv and reductions.csv.
    Matrix {
        dir: PathBuf,
        /// Run id of the reference run (default: the first hydro-only run).
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a synthetic 1 Hz frequency trace as CSV.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        hours: usize,
        /// Sustained offset segment: START_H,DURATION_H[,OFFSET_MHZ].
        #[arg(long)]
        split: Option<String>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Backtest the hourly forecast models on a trace; one CSV row per model.
    ForecastBacktest {
        trace: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long, default_value_t = 50.0)]
        f_nominal: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Battery power rating covering a fraction of the frequency deviations.
    Size {
        #[arg(long)]
        coverage: f64,
        /// Trace file (default: a 12 h synthetic trace with seed 1).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 125.0)]
        sigma_f: f64,
        #[arg(long, default_value_t = 50.0)]
        f_nominal: f64,
    },
    /// Percent change of each KPI against a baseline run.
    Compare {
        kpi: PathBuf,
        #[arg(long)]
        baseline: String,
        /// Directory for reductions.csv (default: next to the KPI file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with its process exit code.
struct Failure(u8, String);

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure(e.exit_code() as u8, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(2, e.to_string())
}

fn report_run(out: &RunOutput) {
    let k = &out.kpi;
    println!(
        "{}: mileage {:.3} kW, nom {}, te_rms {:.4} kW, e30 {:.4} kW, soe_viol {}, fallbacks {}",
        k.run_id, k.mileage, k.nom, k.te_rms_1s, k.e30, k.soe_viol, k.fallbacks
    );
    let t = &out.timing;
    println!(
        "  {} hours, step mean {:.2} ms, p99 {:.2} ms, max {:.2} ms, total {:.1} s",
        out.ul_calls, t.mean_step_ms, t.p99_step_ms, t.max_step_ms, t.total_s
    );
    if !t.within_budget() {
        eprintln!("warning: {}: 99th percentile step {:.2} ms exceeds {STEP_BUDGET_MS} ms", k.run_id, t.p99_step_ms);
    }
}

fn parse_split(s: &str) -> Result<(f64, f64, f64), Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| invalid(format!("--split: bad number {p:?}")));
    match parts.as_slice() {
        [a, b] => Ok((num(a)?, num(b)?, SynthParams::default().split_offset_mhz)),
        [a, b, c] => Ok((num(a)?, num(b)?, num(c)?)),
        _ => Err(invalid("--split expects START_H,DURATION_H[,OFFSET_MHZ]")),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn io::Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Failure(1, format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { scenario, gamma, out } => {
            let mut s = Scenario::load(&scenario).map_err(invalid)?;
            if let Some(g) = gamma {
                s.controller.lower.gamma = g;
            }
            if let Some(o) = out {
                s.output_dir = o;
            }
            s.validate().map_err(invalid)?;
            fs::create_dir_all(&s.output_dir).map_err(|e| Failure(1, e.to_string()))?;
            let r = simulate(&s)?;
            report_run(&r);
        }
        Command::Matrix { dir, baseline, out } => {
            let scenarios = load_scenario_dir(&dir)?;
            if scenarios.is_empty() {
                return Err(invalid(format!("no *.cfg files in {}", dir.display())));
            }
            for s in &scenarios {
                s.validate().map_err(|e| invalid(format!("{}: {e}", s.name)))?;
            }
            fs::create_dir_all(&out).map_err(|e| Failure(1, e.to_string()))?;
            let m = matrix_to_dir(&scenarios, &out, baseline.as_deref())?;
            for r in &m.runs {
                report_run(r);
            }
            if let Some(rows) = &m.reductions {
                print!("{}", reduction_table(rows));
            }
        }
        Command::Synth { seed, hours, split, out } => {
            if hours < 1 {
                return Err(invalid("--hours must be >= 1"));
            }
            let mut params = SynthParams::default();
            if let Some(sp) = split {
                let (a, d, o) = parse_split(&sp)?;
                params = params.with_split(a, d, o);
            }
            params.check().map_err(invalid)?;
            let trace = synth_trace(seed, hours, &params);
            write_trace(&trace, output(out.as_deref())?).map_err(|e| Failure(1, e.to_string()))?;
        }
        Command::ForecastBacktest { trace, train_fraction, f_nominal, out } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(invalid("--train-fraction must lie in (0, 1)"));
            }
            let t = ingest_trace(&trace).map_err(invalid)?;
            let rows = forecast_backtest(&t, f_nominal, train_fraction).map_err(invalid)?;
            write_backtest_csv(&rows, output(out.as_deref())?).map_err(|e| Failure(1, e.to_string()))?;
        }
        Command::Size { coverage, trace, sigma_f, f_nominal } => {
            let t = match trace {
                Some(p) => ingest_trace(&p).map_err(invalid)?,
                None => synth_trace(1, 12, &SynthParams::default()),
            };
            let kw = size_bess(sigma_f, &t, coverage, f_nominal).map_err(invalid)?;
            println!("{kw:.3}");
        }
        Command::Compare { kpi, baseline, out } => {
            let file = fs::File::open(&kpi).map_err(|e| invalid(format!("{}: {e}", kpi.display())))?;
            let reports = read_kpi_csv(file).map_err(invalid)?;
            let rows = compare(&reports, &baseline).map_err(invalid)?;
            let dir = out.unwrap_or_else(|| kpi.parent().map(Path::to_path_buf).unwrap_or_default());
            save_reductions(&rows, &dir.join("reductions.csv"))?;
            print!("{}", reduction_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
