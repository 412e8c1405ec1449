use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Time-dependent source term `g(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Zero,
    Constant { value: f64 },
    Wells(WellSource),
}

/// Gaussian bumps of standard deviation `width` centered at the wells, each
/// scaled by its rate at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSource {
    pub centers: Vec<(f64, f64)>,
    pub width: f64,
    pub schedule: RateSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSchedule {
    Constant {
        rates: Vec<f64>,
    },
    /// `rate_k(t) = base_k (1 + relative_amplitude sin(2 pi frequency t + phase_k))`
    Sinusoidal {
        base: Vec<f64>,
        relative_amplitude: f64,
        frequency: f64,
        phase: Vec<f64>,
    },
}

impl RateSchedule {
    pub fn rates_at(&self, t: f64) -> Vec<f64> {
        match self {
            RateSchedule::Constant { rates } => rates.clone(),
            RateSchedule::Sinusoidal {
                base,
                relative_amplitude,
                frequency,
                phase,
            } => base
                .iter()
                .zip(phase)
                .map(|(b, p)| b * (1.0 + relative_amplitude * (2.0 * PI * frequency * t + p).sin()))
                .collect(),
        }
    }

    pub fn n_wells(&self) -> usize {
        match self {
            RateSchedule::Constant { rates } => rates.len(),
            RateSchedule::Sinusoidal { base, .. } => base.len(),
        }
    }
}

impl SourceSpec {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Constant { value } => *value,
            SourceSpec::Wells(w) => {
                let inv = 1.0 / (2.0 * w.width * w.width);
                w.schedule
                    .rates_at(t)
                    .iter()
                    .zip(&w.centers)
                    .map(|(rate, (cx, cy))| {
                        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                        rate * (-d2 * inv).exp()
                    })
                    .sum()
            }
        }
    }

    /// Rate vector at time `t`; empty for non-well sources.
    pub fn rates_at(&self, t: f64) -> Vec<f64> {
        match self {
            SourceSpec::Wells(w) => w.schedule.rates_at(t),
            _ => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceSpec::Zero)
    }
}
