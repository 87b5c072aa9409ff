//! Seeded hourly test series: daily sinusoid, linear drift and Gaussian noise.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SeriesRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub len: usize,
    pub level: f64,
    pub amplitude: f64,
    /// Cycle length in hours.
    pub period: f64,
    /// Drift added per hour.
    pub slope: f64,
    /// Noise standard deviation as a fraction of `amplitude`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            len: 2000,
            level: 10.0,
            amplitude: 1.0,
            period: 24.0,
            slope: 0.0005,
            noise: 0.05,
            seed: 2025,
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> Vec<SeriesRecord> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise * config.amplitude).expect("non-negative noise");
    (0..config.len)
        .map(|i| {
            let t = i as f64;
            let cycle = (2.0 * std::f64::consts::PI * t / config.period).sin();
            SeriesRecord {
                timestamp: start + Duration::hours(i as i64),
                value: config.level + config.amplitude * cycle + config.slope * t + noise.sample(&mut rng),
            }
        })
        .collect()
}
