use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary cross-entropy against a soft target.
    #[default]
    Bce,
    /// Squared error on the probability.
    L2,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(Loss::Bce),
            "l2" => Ok(Loss::L2),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{s}`"))),
        }
    }
}

/// Gradient (or any parameter-shaped vector) over `(weights, bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias).sqrt()
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        self.bias += scale * other.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.bias *= factor;
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
            // rounding can leave the result an ulp above the bound
            while self.norm() > max_norm {
                self.scale(1.0 - f64::EPSILON);
            }
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradient,
    pub v: Gradient,
    pub step: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: Gradient::zeros(dim),
            v: Gradient::zeros(dim),
            step: 0,
        }
    }

    /// Bias-corrected Adam update of `params` by `grad`.
    fn step(&mut self, params: &mut Gradient, grad: &Gradient, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        };
        for i in 0..params.weights.len() {
            update(
                &mut params.weights[i],
                &mut self.m.weights[i],
                &mut self.v.weights[i],
                grad.weights[i],
            );
        }
        update(
            &mut params.bias,
            &mut self.m.bias,
            &mut self.v.bias,
            grad.bias,
        );
    }
}

/// Sigmoid-activated linear layer over a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead {
    params: Gradient,
    adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
}

impl RegressionHead {
    pub fn zeros(dim: usize) -> Self {
        Self::from_parts(vec![0.0; dim], 0.0)
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        let dim = weights.len();
        Self {
            params: Gradient { weights, bias },
            adam: AdamState::new(dim),
        }
    }

    /// Zero weights with the bias at the logit of `mean_target`, so the
    /// untrained head predicts the base rate.
    pub fn calibrated(dim: usize, mean_target: f64) -> Self {
        let p = mean_target.clamp(1e-6, 1.0 - 1e-6);
        Self::from_parts(vec![0.0; dim], (p / (1.0 - p)).ln())
    }

    pub fn dim(&self) -> usize {
        self.params.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.params.weights
    }

    pub fn bias(&self) -> f64 {
        self.params.bias
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::new(self.dim());
    }

    pub fn logit(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: features.len(),
            });
        }
        Ok(self
            .params
            .weights
            .iter()
            .zip(features)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            + self.params.bias)
    }

    /// Probability in the open interval (0, 1).
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(features)?).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    pub fn loss_and_grad(
        &self,
        features: &[f64],
        target: f64,
        loss: Loss,
    ) -> Result<(f64, Gradient)> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::Domain(format!("target {target} outside [0, 1]")));
        }
        let z = self.logit(features)?;
        let p = sigmoid(z);
        let (value, dz) = match loss {
            // -[y ln p + (1-y) ln(1-p)] = softplus(z) - y z
            Loss::Bce => (softplus(z) - target * z, p - target),
            Loss::L2 => ((p - target).powi(2), 2.0 * (p - target) * p * (1.0 - p)),
        };
        let grad = Gradient {
            weights: features.iter().map(|f| dz * f).collect(),
            bias: dz,
        };
        Ok((value, grad))
    }

    pub fn apply_adam(&mut self, grad: &Gradient, cfg: &AdamConfig) {
        self.adam.step(&mut self.params, grad, cfg);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            dim: self.dim(),
            weights: self.params.weights.clone(),
            bias: self.params.bias,
        })
        .expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad checkpoint: {e}")))?;
        if ck.weights.len() != ck.dim {
            return Err(Error::DimensionMismatch {
                expected: ck.dim,
                actual: ck.weights.len(),
            });
        }
        Ok(Self::from_parts(ck.weights, ck.bias))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
