//! Stand-in for the camera localizer: noisy, pixel-quantized pose samples.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};
use crate::Vec2;

/// Camera footprint: 92 mm imaged on 1020 px.
pub const PIXEL_SIZE_MM: f64 = 92.0 / 1020.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub position_mm: Vec2,
    pub heading: f64,
    pub t: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    #[serde(rename = "rate_hz")]
    pub rate: f64,
    pub sigma_pos_mm: f64,
    pub sigma_heading_rad: f64,
    pub dropout_prob: f64,
    pub latency_samples: usize,
    /// Quantization step (mm); zero disables quantization.
    pub pixel_size_mm: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            rate: 10.0,
            sigma_pos_mm: 0.09,
            sigma_heading_rad: 0.02,
            dropout_prob: 0.0,
            latency_samples: 0,
            pixel_size_mm: PIXEL_SIZE_MM,
        }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        SensorConfig {
            sigma_pos_mm: 0.0,
            sigma_heading_rad: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) {
            return Err(Error::Config("sensor rate must be positive".into()));
        }
        if !(self.sigma_pos_mm >= 0.0 && self.sigma_heading_rad >= 0.0) {
            return Err(Error::Config("sensor sigmas must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("dropout probability must lie in [0, 1]".into()));
        }
        if !(self.pixel_size_mm >= 0.0) {
            return Err(Error::Config("pixel size must be non-negative".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Seeded measurement stream owned by one simulation.
#[derive(Debug, Clone)]
pub struct Sensor {
    cfg: SensorConfig,
    rng: ChaCha8Rng,
    pending: VecDeque<PoseMeasurement>,
}

impl Sensor {
    pub fn new(cfg: SensorConfig, seed: u64) -> Self {
        Sensor {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    /// Sample the true state. With latency the returned measurement is the
    /// one taken `latency_samples` ticks earlier (invalid until the pipe fills).
    pub fn measure(&mut self, state: &RobotState) -> PoseMeasurement {
        let fresh = measure(state, &self.cfg, &mut self.rng);
        self.pending.push_back(fresh);
        if self.pending.len() > self.cfg.latency_samples {
            self.pending.pop_front().expect("non-empty")
        } else {
            PoseMeasurement {
                valid: false,
                ..fresh
            }
        }
    }
}

/// One noisy sample of the true pose. The random draws happen in a fixed
/// order regardless of configuration, so streams stay aligned across configs.
pub fn measure(state: &RobotState, cfg: &SensorConfig, rng: &mut ChaCha8Rng) -> PoseMeasurement {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let nx: f64 = unit.sample(rng);
    let ny: f64 = unit.sample(rng);
    let nh: f64 = unit.sample(rng);
    let drop: f64 = rng.random();

    let truth_mm = state.position * 1e3;
    let noisy = truth_mm + cfg.sigma_pos_mm * Vec2::new(nx, ny);
    let position_mm = if cfg.pixel_size_mm > 0.0 {
        noisy.map(|c| (c / cfg.pixel_size_mm).round() * cfg.pixel_size_mm)
    } else {
        noisy
    };
    PoseMeasurement {
        position_mm,
        heading: state.heading + cfg.sigma_heading_rad * nh,
        t: state.t,
        valid: drop >= cfg.dropout_prob,
    }
}

/// Velocity from first differences of valid samples, smoothed by a
/// two-sample moving average. Holds the last estimate through dropouts.
#[derive(Debug, Clone, Default)]
pub struct VelocityEstimator {
    last: Option<(f64, Vec2)>,
    prev_diff: Option<Vec2>,
    estimate: Vec2,
}

impl VelocityEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed a measurement (mm); returns the current estimate in m/s.
    pub fn update(&mut self, m: &PoseMeasurement) -> Vec2 {
        if !m.valid {
            return self.estimate;
        }
        let p = m.position_mm * 1e-3;
        if let Some((t0, p0)) = self.last {
            let dt = m.t - t0;
            if dt > 0.0 {
                let diff = (p - p0) / dt;
                self.estimate = match self.prev_diff {
                    Some(d) => 0.5 * (diff + d),
                    None => diff,
                };
                self.prev_diff = Some(diff);
            }
        }
        self.last = Some((m.t, p));
        self.estimate
    }

    pub fn estimate(&self) -> Vec2 {
        self.estimate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_at(x: f64, y: f64, t: f64) -> RobotState {
        RobotState {
            t,
            ..RobotState::at_rest(Vec2::new(x, y), 0.7)
        }
    }

    #[test]
    fn noiseless_is_quantized_truth() {
        let mut s = Sensor::new(SensorConfig::noiseless(), 1);
        let st = state_at(0.012345, -0.004321, 0.0);
        let m = s.measure(&st);
        assert!(m.valid);
        for (meas, truth) in m.position_mm.iter().zip((st.position * 1e3).iter()) {
            assert!((meas - truth).abs() <= 0.5 * PIXEL_SIZE_MM + 1e-12);
            let k = meas / PIXEL_SIZE_MM;
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert_eq!(m.heading, 0.7);
    }

    #[test]
    fn full_dropout() {
        let cfg = SensorConfig {
            dropout_prob: 1.0,
            ..Default::default()
        };
        let mut s = Sensor::new(cfg, 9);
        for k in 0..100 {
            assert!(!s.measure(&state_at(0.0, 0.0, k as f64 * 0.1)).valid);
        }
    }

    #[test]
    fn seeded_streams_repeat() {
        let cfg = SensorConfig {
            dropout_prob: 0.2,
            ..Default::default()
        };
        let run = || {
            let mut s = Sensor::new(cfg, 42);
            (0..200)
                .map(|k| s.measure(&state_at(1e-3 * k as f64, 0.0, 0.1 * k as f64)))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn latency_delays_samples() {
        let cfg = SensorConfig {
            latency_samples: 2,
            ..SensorConfig::noiseless()
        };
        let mut s = Sensor::new(cfg, 0);
        let ms: Vec<_> = (0..5)
            .map(|k| s.measure(&state_at(0.0, 0.0, k as f64)))
            .collect();
        assert!(!ms[0].valid && !ms[1].valid);
        assert!(ms[2].valid && ms[2].t == 0.0);
        assert_eq!(ms[4].t, 2.0);
    }

    #[test]
    fn empirical_noise_matches_sigma() {
        for sigma in [0.5, 1.0] {
            let cfg = SensorConfig {
                sigma_pos_mm: sigma,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let st = state_at(0.0101, -0.0033, 0.0);
            let n = 100_000;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..n {
                let e = measure(&st, &cfg, &mut rng).position_mm.x - st.position.x * 1e3;
                sum += e;
                sum2 += e * e;
            }
            let mean = sum / n as f64;
            let std = (sum2 / n as f64 - mean * mean).sqrt();
            assert!((std / sigma - 1.0).abs() < 0.03, "sigma {sigma}: std {std}");
        }
    }

    #[test]
    fn velocity_estimator_averages_and_holds() {
        let mut est = VelocityEstimator::new();
        let m = |x_mm: f64, t: f64, valid: bool| PoseMeasurement {
            position_mm: Vec2::new(x_mm, 0.0),
            heading: 0.0,
            t,
            valid,
        };
        assert_eq!(est.update(&m(0.0, 0.0, true)), Vec2::zeros());
        let v1 = est.update(&m(1.0, 0.1, true));
        assert!((v1.x - 0.01).abs() < 1e-15);
        let v2 = est.update(&m(3.0, 0.2, true));
        assert!((v2.x - 0.015).abs() < 1e-15);
        let held = est.update(&m(100.0, 0.3, false));
        assert_eq!(held, v2);
    }
}
