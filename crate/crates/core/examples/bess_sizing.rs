//! Battery power rating needed to cover 95 % and 99 % of the frequency
//! deviations of a synthetic trace at a droop of 125 kW/Hz.
//!
//! cargo run --release --example bess_sizing [seed] [hours]

use hydro_fcr::harness::{size_bess, synth_trace, SynthParams};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let hours: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12);
    let trace = synth_trace(seed, hours, &SynthParams::default());
    for coverage in [0.95, 0.99] {
        let kw = size_bess(125.0, &trace, coverage, 50.0)?;
        println!("coverage {:.0}%: {kw:.2} kW (dead-band threshold {:.1} mHz)", 100.0 * coverage, kw / 125.0 * 1000.0);
    }
    Ok(())
}
