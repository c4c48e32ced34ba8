//! Backtests the hourly regulating-energy models on a 21-day synthetic trace
//! and prints one row per model.
//!
//! cargo run --release --example forecast_backtest [seed]

use hydro_fcr::harness::{forecast_backtest, synth_trace, write_backtest_csv, SynthParams};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let trace = synth_trace(seed, 21 * 24, &SynthParams::default());
    let rows = forecast_backtest(&trace, 50.0, 0.7)?;
    println!("{:<18} {:>7} {:>6} {:>9} {:>8} {:>8} {:>8} {:>7}", "model", "train", "test", "mse", "sigma", "g95", "g99", "dw");
    for r in &rows {
        println!(
            "{:<18} {:>7} {:>6} {:>9.3} {:>8.3} {:>8.3} {:>8.3} {:>7.3}",
            r.model.name(),
            r.n_train,
            r.n_test,
            r.mse,
            r.sigma,
            r.gamma_95,
            r.gamma_99,
            r.dw
        );
    }
    println!("\nCSV:");
    write_backtest_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
