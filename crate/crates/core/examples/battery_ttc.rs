//! Terminal voltage and SOE of the default pack during a 10 min discharge
//! at 8 kW followed by 10 min of rest.
//!
//! cargo run --release --example battery_ttc

use hydro_fcr::domain::BessConfig;
use hydro_fcr::plant::{bess_step, BessState};

fn main() -> anyhow::Result<()> {
    let cfg = BessConfig::sized(9.0, 9.0);
    let mut s = BessState::at_rest(0.6, &cfg);
    println!("{:>5} {:>7} {:>9} {:>8} {:>8}", "t_s", "b_kw", "v_dc", "i_dc", "soe");
    for t in 0..1200 {
        let b = if t < 600 { -8.0 } else { 0.0 };
        let step = bess_step(&s, b, &cfg, 1.0)?;
        s = step.state;
        if t % 60 == 59 {
            println!("{:>5} {:>7.2} {:>9.3} {:>8.3} {:>8.5}", t + 1, step.b_applied, s.v_dc, s.i_dc, s.soe);
        }
    }
    Ok(())
}
