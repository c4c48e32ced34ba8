mod common;

use hydro_fcr::domain::{BessConfig, PlantConfig, TtcParams};
use hydro_fcr::plant::{bess_step, discretize_ttc, hydro_step, BessState, HydroState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ttc_current_step_matches_rk4() {
    let ttc = TtcParams::default();
    let disc = discretize_ttc(&ttc, 1.0);
    for i in [-14.0, 3.0, 14.0] {
        let mut x = [0.0; 3];
        let mut reference = [0.0; 3];
        for k in 0..3600 {
            x = disc.advance(&x, i);
            reference = common::ttc_rk4(&ttc, reference, i, 1.0, 1e-3);
            let eta: f64 = x.iter().sum::<f64>() + ttc.r_s * i;
            let eta_ref: f64 = reference.iter().sum::<f64>() + ttc.r_s * i;
            assert!((eta - eta_ref).abs() <= 1e-3 * eta_ref.abs(), "i={i} step {k}: {eta} vs {eta_ref}");
        }
    }
}

/// Constant-power discharge against a fine-grid solution of the circuit with
/// the power constraint solved at every sub-step.
#[test]
fn bess_power_step_matches_fine_grid() {
    let cfg = BessConfig::sized(9.0, 9.0);
    let ttc = &cfg.ttc;
    for b_set in [-8.0, 6.0] {
        let mut state = BessState::at_rest(0.5, &cfg);
        let p_dc_w = cfg.ac_to_dc(b_set) * 1000.0;
        let (mut soe, mut x) = (0.5, [0.0f64; 3]);
        let h = 1e-3;
        for k in 0..1200 {
            state = bess_step(&state, b_set, &cfg, 1.0).unwrap().state;
            let mut v_end = 0.0;
            for _ in 0..1000 {
                let v_free = ttc.ocv(soe) + x.iter().sum::<f64>();
                let i = 2.0 * p_dc_w / (v_free + (v_free * v_free + 4.0 * ttc.r_s * p_dc_w).sqrt());
                for j in 0..3 {
                    let (r, c) = ttc.branches[j];
                    x[j] += h * (-x[j] / (r * c) + i / c);
                }
                soe += h * p_dc_w / (3.6e6 * cfg.capacity_kwh);
                v_end = v_free + ttc.r_s * i;
            }
            assert!((state.v_dc - v_end).abs() <= 1e-3 * v_end, "b={b_set} step {k}: {} vs {v_end}", state.v_dc);
            assert!((state.soe - soe).abs() <= 1e-9, "step {k}");
        }
    }
}

#[test]
fn lossless_round_trip_restores_soe() {
    let mut cfg = BessConfig::sized(5.0, 5.0);
    cfg.ttc = TtcParams::ideal();
    cfg.eta_ch = 1.0;
    cfg.eta_dch = 1.0;
    let mut s = BessState::at_rest(0.5, &cfg);
    for b in [2.0, -2.0] {
        for _ in 0..1800 {
            s = bess_step(&s, b, &cfg, 1.0).unwrap().state;
        }
    }
    assert!((s.soe - 0.5).abs() <= 1e-3, "{}", s.soe);
}

#[test]
fn round_trip_loss_is_the_efficiency_product() {
    let mut cfg = BessConfig::sized(5.0, 5.0);
    cfg.ttc = TtcParams::ideal();
    cfg.eta_ch = 0.95;
    cfg.eta_dch = 0.95;
    let mut s = BessState::at_rest(0.5, &cfg);
    // 1 kWh in at the AC side; only eta_ch * eta_dch of it can come back out
    for _ in 0..3600 {
        s = bess_step(&s, 1.0, &cfg, 1.0).unwrap().state;
    }
    assert!((s.soe - (0.5 + 0.95 / 5.0)).abs() <= 1e-3);
    for _ in 0..3600 {
        s = bess_step(&s, -0.95 * 0.95, &cfg, 1.0).unwrap().state;
    }
    assert!((s.soe - 0.5).abs() <= 1e-3, "{}", s.soe);
}

#[test]
fn hydro_step_is_the_first_order_lag_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let tau = rng.random_range(1.0..30.0);
        let cfg = PlantConfig { tau_h: tau, h_min: 0.0, h_max: 100.0, h_dot_max: 1e6, ..PlantConfig::default() };
        let h = rng.random_range(0.0..100.0);
        let h_set = rng.random_range(0.0..100.0);
        let a = cfg.dt / tau;
        let expected = (1.0 - a) * h + a * h_set;
        assert_eq!(hydro_step(HydroState { h }, h_set, &cfg).h, expected);
    }
}

proptest! {
    #[test]
    fn hydro_ramp_bound_holds(h in 5.0f64..50.0, h_set in -10.0f64..80.0, tau in 1.0f64..10.0, ramp in 0.1f64..10.0) {
        let cfg = PlantConfig { tau_h: tau, h_dot_max: ramp, ..PlantConfig::default() };
        let next = hydro_step(HydroState { h }, h_set, &cfg).h;
        prop_assert!((next - h).abs() <= ramp * cfg.dt + 1e-12);
        prop_assert!(next >= cfg.h_min && next <= cfg.h_max);
    }

    /// Rest is a fixed point of the battery at zero power.
    #[test]
    fn battery_at_rest_stays_at_rest(soe in 0.1f64..0.9) {
        let cfg = BessConfig::sized(9.0, 9.0);
        let s = BessState::at_rest(soe, &cfg);
        let next = bess_step(&s, 0.0, &cfg, 1.0).unwrap();
        prop_assert_eq!(next.state.soe, soe);
        prop_assert_eq!(next.state.x, [0.0; 3]);
        prop_assert!(!next.clipped);
    }
}
