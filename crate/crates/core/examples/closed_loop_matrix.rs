//! Runs hydro-only, DBF and DLMPC (5 and 9 kW batteries) on one synthetic
//! 12 h trace and prints the KPI rows and the reduction table.
//!
//! cargo run --release --example closed_loop_matrix [seed] [out_dir]

use std::path::PathBuf;

use hydro_fcr::harness::{matrix_to_dir, standard_matrix, Scenario};
use hydro_fcr::kpi::reduction_table;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "out/matrix".to_string()));

    let base = Scenario { name: "synth".to_string(), seed, output_dir: out_dir.clone(), ..Scenario::default() };
    let scenarios = standard_matrix(&base);
    let result = matrix_to_dir(&scenarios, &out_dir, None)?;

    println!("{:<24} {:>9} {:>8} {:>7} {:>8} {:>6} {:>5} {:>9}", "run", "te_rms", "e30", "mileage", "nom", "soe_v", "fb", "step_ms");
    for r in &result.runs {
        let k = &r.kpi;
        println!(
            "{:<24} {:>9.4} {:>8.4} {:>7.2} {:>8} {:>6} {:>5} {:>9.3}",
            k.run_id, k.te_rms_1s, k.e30, k.mileage, k.nom, k.soe_viol, k.fallbacks, r.timing.mean_step_ms
        );
    }
    if let Some(rows) = &result.reductions {
        println!("\n{}", reduction_table(rows));
    }
    println!("files written to {}", out_dir.display());
    Ok(())
}
