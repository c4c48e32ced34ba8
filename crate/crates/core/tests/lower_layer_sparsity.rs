mod common;

use hydro_fcr::control::lower::{LowerLayer, LowerLayerParams};
use hydro_fcr::domain::{BessConfig, PlantConfig};
use hydro_fcr::qp::QpStatus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMAS: [f64; 5] = [0.0, 0.1, 0.4, 1.0, 10.0];

fn params() -> LowerLayerParams {
    LowerLayerParams { eps_abs: 1e-8, max_iter: 20_000, ..LowerLayerParams::default() }
}

#[test]
fn movement_is_non_increasing_in_gamma() {
    let plant = PlantConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..50 {
        let bess = BessConfig::sized(if case % 2 == 0 { 5.0 } else { 9.0 }, 5.0);
        let mut input = common::random_ll_input(&mut rng, &plant, &bess, false);
        let mut last = f64::INFINITY;
        for gamma in GAMMAS {
            input.gamma = gamma;
            let sol = LowerLayer::new(params()).solve(&input, &plant, &bess).unwrap();
            assert_eq!(sol.status, QpStatus::Solved, "case {case} gamma {gamma}");
            let moved = common::total_movement(input.h_set_prev, &sol.h_set);
            assert!(moved <= last + 1e-5, "case {case}: gamma {gamma} moves {moved} after {last}");
            last = moved;
        }
    }
}

#[test]
fn huge_gamma_with_flat_forecast_holds_the_set_point() {
    let plant = PlantConfig::default();
    let bess = BessConfig::sized(9.0, 9.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..20 {
        let mut input = common::random_ll_input(&mut rng, &plant, &bess, true);
        input.gamma = 1e6;
        let sol = LowerLayer::new(params()).solve(&input, &plant, &bess).unwrap();
        let moved = common::total_movement(input.h_set_prev, &sol.h_set);
        assert!(moved <= 1e-6 * plant.h_max, "case {case}: {moved}");
    }
}

#[test]
fn zero_gamma_flat_forecast_tracks_dispatch_with_hydro() {
    let plant = PlantConfig::default();
    let bess = BessConfig::sized(9.0, 9.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut input = common::random_ll_input(&mut rng, &plant, &bess, true);
    input.gamma = 0.0;
    input.h_meas = plant.p_disp[0] + input.b0;
    input.h_set_prev = input.h_meas;
    let sol = LowerLayer::new(params()).solve(&input, &plant, &bess).unwrap();
    for (h, b) in sol.h_pred.iter().zip(&sol.b_set) {
        assert!((h - b - plant.p_disp[0]).abs() < 1e-4, "{h} {b}");
    }
}
