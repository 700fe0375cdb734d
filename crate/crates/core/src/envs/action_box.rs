use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Axis-aligned box of admissible actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() {
            return Err(Error::contract(format!(
                "action box bounds have lengths {} and {}",
                low.len(),
                high.len()
            )));
        }
        let ok = low.iter().zip(&high).all(|(l, h)| l.is_finite() && h.is_finite() && l < h);
        if !ok {
            return Err(Error::contract("action box needs finite low < high on every axis"));
        }
        Ok(ActionBox { low, high })
    }

    /// `[-h, h]^dim`.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        ActionBox {
            low: vec![-half; dim],
            high: vec![half; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn clip(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(a, (l, h))| a.clamp(*l, *h))
            .collect()
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == self.dim()
            && action
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(a, (l, h))| *a >= *l && *a <= *h)
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    }
}
