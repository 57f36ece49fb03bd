//! First-order jets: a value paired with its directional derivative.
//!
//! Every field on the shipped surfaces is an algebraic expression in the
//! point and its normal frame, so the product rule applied to
//! `(value, rate)` pairs yields exact directional derivatives.

use crate::metallic::{Matrix, Vector};

/// A point of a surface, a direction of motion, and the normal frame with
/// its rates of change along that direction.
#[derive(Debug, Clone)]
pub struct FrameJet {
    pub point: Vector,
    pub direction: Vector,
    pub normals: Vec<Vector>,
    pub normal_rates: Vec<Vector>,
}

impl FrameJet {
    pub fn codim(&self) -> usize {
        self.normals.len()
    }

    pub fn normal(&self, alpha: usize) -> VectorJet {
        VectorJet {
            value: self.normals[alpha].clone(),
            rate: self.normal_rates[alpha].clone(),
        }
    }

    /// Tangential projection `v − Σ⟨v, N_α⟩N_α` with its rate.
    pub fn project(&self, v: &VectorJet) -> VectorJet {
        let mut out = v.clone();
        for alpha in 0..self.codim() {
            let n = self.normal(alpha);
            let coeff = v.dot(&n);
            out.value -= &n.value * coeff.value;
            out.rate -= &n.value * coeff.rate + &n.rate * coeff.value;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorJet {
    pub value: Vector,
    pub rate: Vector,
}

impl VectorJet {
    pub fn constant(value: Vector) -> Self {
        let rate = Vector::zeros(value.len());
        Self { value, rate }
    }

    /// Image under a constant linear map.
    pub fn map(&self, m: &Matrix) -> Self {
        Self {
            value: m * &self.value,
            rate: m * &self.rate,
        }
    }

    pub fn dot(&self, other: &VectorJet) -> ScalarJet {
        ScalarJet {
            value: self.value.dot(&other.value),
            rate: self.rate.dot(&other.value) + self.value.dot(&other.rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub rate: f64,
}

impl ScalarJet {
    pub fn constant(value: f64) -> Self {
        Self { value, rate: 0.0 }
    }
}
