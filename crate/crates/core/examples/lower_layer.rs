//! One receding-horizon split of the power set-point between turbine and
//! battery, for several movement weights. Larger weights leave more of the
//! frequency response to the battery.
//!
//! cargo run --release --example lower_layer

use hydro_fcr::control::lower::{LowerLayer, LowerLayerInput, LowerLayerParams};
use hydro_fcr::domain::{BessConfig, PlantConfig};
use hydro_fcr::plant::BessState;

fn main() -> anyhow::Result<()> {
    let plant = PlantConfig::default();
    let bess = BessConfig::sized(5.0, 5.0);
    let p = 30;
    // a 60 mHz dip recovering over the horizon
    let f_hat: Vec<f64> = (0..p).map(|j| 50.0 - 0.06 * (-(j as f64) / 10.0).exp()).collect();
    let mut input = LowerLayerInput {
        k: 0,
        f_hat,
        p_disp_horizon: vec![27.0; p],
        h_meas: 27.0,
        h_set_prev: 27.0,
        h_ref_prev: 27.0,
        bess_state: BessState::at_rest(0.5, &bess),
        b0: 0.0,
        gamma: 0.0,
        p,
    };

    println!("{:>6} {:>10} {:>10} {:>10} {:>8}", "gamma", "sum|dH|", "H_set_1", "B_set_1", "status");
    for gamma in [0.0, 0.1, 0.4, 1.0, 10.0] {
        input.gamma = gamma;
        let sol = LowerLayer::new(LowerLayerParams::default()).solve(&input, &plant, &bess)?;
        let mut moved = 0.0;
        let mut prev = input.h_set_prev;
        for &h in &sol.h_set {
            moved += (h - prev).abs();
            prev = h;
        }
        println!("{gamma:>6} {moved:>10.4} {:>10.4} {:>10.4} {:>8?}", sol.h_set[0], sol.b_set[0], sol.status);
    }
    Ok(())
}
