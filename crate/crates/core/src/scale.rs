//! Piecewise scaled-logistic mapping between raw slider positions and
//! probabilities.
//!
//! The slider has 10,000 steps. Each half of the range uses its own logistic
//! steepness and is affinely renormalised so that positions 0, 5000 and 10000
//! map to exactly 0, 0.5 and 1. Steeper halves spend more slider travel near
//! the extremes, which is where people are most sensitive to differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of slider steps. Positions run over `0..=SLIDER_STEPS`.
pub const SLIDER_STEPS: u32 = 10_000;
pub const SLIDER_MID: f64 = 5_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    /// Steepness for positions in `[0, 5000]`.
    pub beta_low: f64,
    /// Steepness for positions in `(5000, 10000]`.
    pub beta_high: f64,
    #[serde(default = "default_steps")]
    pub steps: u32,
}

fn default_steps() -> u32 {
    SLIDER_STEPS
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            beta_low: 1.5e-3,
            beta_high: 9.0e-4,
            steps: SLIDER_STEPS,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl ScaleParams {
    pub fn new(beta_low: f64, beta_high: f64) -> Result<Self> {
        let params = Self {
            beta_low,
            beta_high,
            steps: SLIDER_STEPS,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_low.is_finite() && self.beta_low > 0.0) {
            return Err(Error::Config(format!(
                "beta_low must be positive, got {}",
                self.beta_low
            )));
        }
        if !(self.beta_high.is_finite() && self.beta_high > 0.0) {
            return Err(Error::Config(format!(
                "beta_high must be positive, got {}",
                self.beta_high
            )));
        }
        if self.steps != SLIDER_STEPS {
            return Err(Error::Config(format!(
                "slider must have {SLIDER_STEPS} steps, got {}",
                self.steps
            )));
        }
        Ok(())
    }

    /// Maps a raw slider position in `[0, 10000]` to a probability.
    ///
    /// Non-integer positions are accepted so that averaged raw values can be
    /// transformed too.
    pub fn to_probability(&self, raw: f64) -> Result<f64> {
        if !(0.0..=SLIDER_STEPS as f64).contains(&raw) {
            return Err(Error::SliderRange(raw));
        }
        Ok(self.to_probability_unchecked(raw))
    }

    fn to_probability_unchecked(self, raw: f64) -> f64 {
        if raw <= SLIDER_MID {
            let floor = sigmoid(-SLIDER_MID * self.beta_low);
            let s = sigmoid(self.beta_low * (raw - SLIDER_MID));
            0.5 * (s - floor) / (0.5 - floor)
        } else {
            let ceil = sigmoid(SLIDER_MID * self.beta_high);
            let s = sigmoid(self.beta_high * (raw - SLIDER_MID));
            0.5 + 0.5 * (s - 0.5) / (ceil - 0.5)
        }
    }

    /// Inverse of [`ScaleParams::to_probability`], clamped to `[0, 10000]`.
    pub fn from_probability(&self, prob: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!("probability {prob} outside [0, 1]")));
        }
        if prob == 0.0 {
            return Ok(0.0);
        }
        if prob == 1.0 {
            return Ok(SLIDER_STEPS as f64);
        }
        let raw = if prob <= 0.5 {
            let floor = sigmoid(-SLIDER_MID * self.beta_low);
            let s = floor + 2.0 * prob * (0.5 - floor);
            SLIDER_MID + logit(s) / self.beta_low
        } else {
            let ceil = sigmoid(SLIDER_MID * self.beta_high);
            let s = 0.5 + 2.0 * (prob - 0.5) * (ceil - 0.5);
            SLIDER_MID + logit(s) / self.beta_high
        };
        Ok(raw.clamp(0.0, SLIDER_STEPS as f64))
    }

    /// Samples the transform at every `stride` slider steps (always including
    /// both endpoints). Used by the web UI for its live readout.
    pub fn lookup_table(&self, stride: u32) -> Vec<(u32, f64)> {
        let stride = stride.max(1);
        let mut table: Vec<(u32, f64)> = (0..=SLIDER_STEPS)
            .step_by(stride as usize)
            .map(|x| (x, self.to_probability_unchecked(x as f64)))
            .collect();
        if table.last().map(|&(x, _)| x) != Some(SLIDER_STEPS) {
            table.push((SLIDER_STEPS, 1.0));
        }
        table
    }
}
