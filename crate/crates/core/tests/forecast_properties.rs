mod common;

use hydro_fcr::domain::FrequencyTrace;
use hydro_fcr::forecast::{durbin_watson, gamma_t, integrate_hourly, quantile, ModelKind, DEFAULT_AR_ORDER};
use hydro_fcr::harness::backtest_series;
use proptest::prelude::*;

#[test]
fn seasonal_ar_beats_persistence_out_of_sample() {
    for seed in [1, 2, 3] {
        let series = common::seasonal_series(seed, 90);
        let sar = backtest_series(&series, ModelKind::SeasonalAr, DEFAULT_AR_ORDER, 0.7).unwrap();
        let pers = backtest_series(&series, ModelKind::Persistence, DEFAULT_AR_ORDER, 0.7).unwrap();
        assert!(sar.mse < pers.mse, "seed {seed}: {} vs {}", sar.mse, pers.mse);
    }
}

#[test]
fn two_sigma_exceedance_of_normal_residuals() {
    let g = gamma_t(&common::normal(5, 100_000), 2.0);
    assert!((g - 0.0455).abs() <= 0.01, "{g}");
}

#[test]
fn durbin_watson_of_white_noise_is_two() {
    let dw = durbin_watson(&common::normal(6, 20_000)).unwrap();
    assert!((dw - 2.0).abs() <= 0.05, "{dw}");
}

#[test]
fn durbin_watson_detects_positive_autocorrelation() {
    let e = common::normal(7, 5000);
    let mut prev = 0.0;
    let ar: Vec<f64> = e
        .iter()
        .map(|x| {
            prev = 0.8 * prev + x;
            prev
        })
        .collect();
    // DW is about 2 (1 - rho)
    assert!((durbin_watson(&ar).unwrap() - 0.4).abs() < 0.1);
}

#[test]
fn hourly_integral_of_constant_offset() {
    let trace = FrequencyTrace::new(0, 1.0, vec![49.98; 3 * 3600]).unwrap();
    let w = integrate_hourly(&trace, 50.0).unwrap();
    assert_eq!(w.values.len(), 3);
    for v in w.values {
        assert!((v - 0.02).abs() < 1e-12);
    }
}

#[test]
fn hourly_integral_skips_to_the_first_full_hour() {
    let mut samples = vec![50.0; 1800];
    samples.extend(vec![50.01; 3600]);
    let trace = FrequencyTrace::new(1800, 1.0, samples).unwrap();
    let w = integrate_hourly(&trace, 50.0).unwrap();
    assert_eq!(w.t0_hour, 3600);
    assert_eq!(w.values.len(), 1);
    assert!((w.values[0] + 0.01).abs() < 1e-12);
}

proptest! {
    #[test]
    fn quantile_is_monotone_and_bounded(v in prop::collection::vec(-1.0f64..1.0, 1..200), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        prop_assert_eq!(quantile(&v, 0.0), min);
        prop_assert_eq!(quantile(&v, 1.0), max);
    }

    /// Exceedance counts are invariant to scaling the residuals.
    #[test]
    fn gamma_t_is_scale_free(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let r = common::normal(seed, 500);
        let scaled: Vec<f64> = r.iter().map(|x| x * scale).collect();
        prop_assert!((gamma_t(&r, 2.0) - gamma_t(&scaled, 2.0)).abs() <= 2.0 / 500.0);
    }
}
