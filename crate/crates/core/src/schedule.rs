use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic weight `ρ(s)` or `λ(s)` on `[0, t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSchedule {
    Constant { value: f64 },
    /// `s^exponent`.
    Power { exponent: f64 },
    /// `sin(π s / (2 horizon))`.
    Sine { horizon: f64 },
    /// Values on the grid `k * step`, held piecewise constant.
    Grid { step: f64, values: Vec<f64> },
}

impl Default for ScalarSchedule {
    fn default() -> Self {
        ScalarSchedule::Constant { value: 1.0 }
    }
}

impl ScalarSchedule {
    pub fn constant(value: f64) -> Self {
        ScalarSchedule::Constant { value }
    }

    pub fn linear() -> Self {
        ScalarSchedule::Power { exponent: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            ScalarSchedule::Constant { value } if !value.is_finite() => bad("constant schedule must be finite"),
            ScalarSchedule::Power { exponent } if !(*exponent >= 0.0) => bad("power exponent must be >= 0"),
            ScalarSchedule::Sine { horizon } if !(*horizon > 0.0) => bad("sine horizon must be > 0"),
            ScalarSchedule::Grid { step, values } if !(*step > 0.0) || values.is_empty() => {
                bad("grid schedule needs a positive step and at least one value")
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            ScalarSchedule::Constant { value } => *value,
            ScalarSchedule::Power { exponent } => {
                if *exponent == 0.0 {
                    1.0
                } else {
                    s.max(0.0).powf(*exponent)
                }
            }
            ScalarSchedule::Sine { horizon } => (FRAC_PI_2 * s / horizon).sin(),
            ScalarSchedule::Grid { step, values } => {
                let k = ((s / step).round().max(0.0) as usize).min(values.len() - 1);
                values[k]
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            ScalarSchedule::Constant { .. } => 0.0,
            ScalarSchedule::Power { exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else {
                    exponent * s.max(0.0).powf(exponent - 1.0)
                }
            }
            ScalarSchedule::Sine { horizon } => {
                FRAC_PI_2 / horizon * (FRAC_PI_2 * s / horizon).cos()
            }
            ScalarSchedule::Grid { step, .. } => (self.value(s + step) - self.value(s)) / step,
        }
    }

    /// Exact `∫_0^t`, when available in closed form.
    pub fn integral(&self, t: f64) -> Option<f64> {
        match self {
            ScalarSchedule::Constant { value } => Some(value * t),
            ScalarSchedule::Power { exponent } => Some(t.powf(exponent + 1.0) / (exponent + 1.0)),
            ScalarSchedule::Sine { horizon } => {
                Some(horizon / FRAC_PI_2 * (1.0 - (FRAC_PI_2 * t / horizon).cos()))
            }
            ScalarSchedule::Grid { .. } => None,
        }
    }

    /// Left-point values `ρ(k h)` for `k = 0..steps`.
    pub fn on_grid(&self, h: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| self.value(k as f64 * h)).collect()
    }
}
