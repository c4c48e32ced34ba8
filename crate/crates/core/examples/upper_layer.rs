//! Hourly SOE manager: the offset chosen for a few states of charge and
//! forecasts of the regulating energy.
//!
//! cargo run --release --example upper_layer

use hydro_fcr::control::upper::{solve_upper_layer, UpperLayerInput};
use hydro_fcr::domain::BessConfig;
use hydro_fcr::forecast::WForecast;

fn main() {
    let bess = BessConfig::sized(5.0, 5.0);
    println!("{:>6} {:>8} {:>7} {:>8} {:>8} {:>8} {:>9}", "soe", "w_hat", "band", "b0_kw", "soe_dn", "soe_up", "feasible");
    for soe in [0.15, 0.5, 0.85] {
        for w_hat in [-0.02, 0.0, 0.02] {
            for band in [0.005, 0.02] {
                let forecast = WForecast { w_hat, w_up: band, w_down: band, ..WForecast::point(w_hat) };
                let r = solve_upper_layer(&UpperLayerInput { soe_meas: soe, forecast, sigma_f: 125.0, bess: bess.clone() });
                println!(
                    "{soe:>6.2} {w_hat:>8.3} {band:>7.3} {:>8.3} {:>8.3} {:>8.3} {:>9}",
                    r.b0, r.soe_down, r.soe_up, r.feasible
                );
            }
        }
    }
}
