//! Synthetic frequency traces: Ornstein-Uhlenbeck deviation, a daily
//! profile and an optional sustained offset ("split") segment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{FrequencyTrace, SECONDS_PER_HOUR};

/// 2021-01-01T00:00:00Z, start of every synthetic trace.
pub const SYNTH_T0: i64 = 1_609_459_200;
const RAMP_S: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Stationary standard deviation of the OU component, mHz.
    pub std_mhz: f64,
    /// Mean-reversion rate, 1/s.
    pub theta_per_s: f64,
    /// Amplitude of the daily profile, mHz. Off by default.
    pub daily_amp_mhz: f64,
    /// Start of the split segment, hours from the trace start.
    pub split_start_h: f64,
    /// Zero disables the split segment.
    pub split_duration_h: f64,
    /// Frequency drop during the split segment, mHz (negative raises it).
    pub split_offset_mhz: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            std_mhz: 20.0,
            theta_per_s: 1.0 / 120.0,
            daily_amp_mhz: 0.0,
            split_start_h: 0.0,
            split_duration_h: 0.0,
            split_offset_mhz: 120.0,
        }
    }
}

impl SynthParams {
    pub fn check(&self) -> Result<(), String> {
        if !(self.std_mhz >= 0.0 && self.std_mhz.is_finite()) {
            return Err("std_mhz must be >= 0".into());
        }
        if !(self.theta_per_s > 0.0 && self.theta_per_s.is_finite()) {
            return Err("theta_per_s must be > 0".into());
        }
        if !(self.split_duration_h >= 0.0 && self.split_start_h >= 0.0) {
            return Err("split start and duration must be >= 0".into());
        }
        if !(self.daily_amp_mhz.is_finite() && self.split_offset_mhz.is_finite()) {
            return Err("amplitudes must be finite".into());
        }
        Ok(())
    }

    /// Same parameters with a split segment at `start_h` for `duration_h` hours.
    pub fn with_split(&self, start_h: f64, duration_h: f64, offset_mhz: f64) -> Self {
        Self { split_start_h: start_h, split_duration_h: duration_h, split_offset_mhz: offset_mhz, ..self.clone() }
    }

    /// Deterministic part of the deviation (daily profile plus split), Hz,
    /// at `t` seconds from the trace start. Positive lowers the frequency.
    pub fn deterministic_offset(&self, t: f64) -> f64 {
        let day = 86_400.0;
        let phase = std::f64::consts::TAU * t / day;
        let mut mhz = self.daily_amp_mhz * (phase.sin() + 0.5 * (2.0 * phase + 1.0).sin());
        if self.split_duration_h > 0.0 {
            let a = self.split_start_h * SECONDS_PER_HOUR;
            let b = a + self.split_duration_h * SECONDS_PER_HOUR;
            let w = if t < a - RAMP_S || t > b + RAMP_S {
                0.0
            } else if t < a {
                (t - (a - RAMP_S)) / RAMP_S
            } else if t > b {
                ((b + RAMP_S) - t) / RAMP_S
            } else {
                1.0
            };
            mhz += w * self.split_offset_mhz;
        }
        mhz / 1000.0
    }
}

/// `hours` hours of 1 Hz samples around 50 Hz, reproducible per seed.
///
/// The OU component uses its exact discretisation, so the sample variance
/// matches the stationary variance for any step.
pub fn synth_trace(seed: u64, hours: usize, params: &SynthParams) -> FrequencyTrace {
    let hours = hours.max(1);
    let dt = 1.0;
    let n = (hours as f64 * SECONDS_PER_HOUR / dt) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = params.std_mhz / 1000.0;
    let decay = (-params.theta_per_s * dt).exp();
    let innovation = sigma * (1.0 - decay * decay).sqrt();

    let z0: f64 = StandardNormal.sample(&mut rng);
    let mut x = sigma * z0;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let f = 50.0 - x - params.deterministic_offset(t);
        samples.push(f.clamp(45.0, 55.0));
        let z: f64 = StandardNormal.sample(&mut rng);
        x = decay * x + innovation * z;
    }
    FrequencyTrace::new(SYNTH_T0, dt, samples).expect("synthetic samples are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::std_dev;

    #[test]
    fn reproducible_per_seed() {
        let p = SynthParams::default();
        assert_eq!(synth_trace(7, 2, &p), synth_trace(7, 2, &p));
        assert_ne!(synth_trace(7, 2, &p).samples(), synth_trace(8, 2, &p).samples());
        assert_eq!(synth_trace(7, 12, &p).len(), 43_200);
    }

    #[test]
    fn split_segment_is_sustained() {
        let p = SynthParams::default().with_split(2.0, 1.0, 150.0);
        let tr = synth_trace(3, 4, &p);
        let seg = &tr.samples()[7200..10800];
        let inside = seg.iter().filter(|&&f| 50.0 - f > 0.1).count();
        assert!(inside as f64 > 0.99 * seg.len() as f64, "{inside}");
    }

    #[test]
    fn flat_when_everything_is_off() {
        let p = SynthParams { std_mhz: 0.0, daily_amp_mhz: 0.0, ..SynthParams::default() };
        assert!(synth_trace(1, 1, &p).samples().iter().all(|&f| f == 50.0));
    }

    #[test]
    fn ou_variance() {
        let p = SynthParams { daily_amp_mhz: 0.0, ..SynthParams::default() };
        let tr = synth_trace(11, 278, &p);
        let dev: Vec<f64> = tr.samples().iter().map(|f| 50.0 - f).collect();
        let s = std_dev(&dev) * 1000.0;
        assert!((s - 20.0).abs() < 2.0, "{s}");
    }
}
