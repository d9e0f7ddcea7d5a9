//! Rényi entropy and Hill numbers of normalized neighbor weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order α of the entropy. `Order(1.0)` is normalized to `Shannon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenyiOrder {
    Order(f64),
    Shannon,
}

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!(
                "Renyi order must be a positive finite number, got {alpha}"
            )));
        }
        Ok(if alpha == 1.0 {
            RenyiOrder::Shannon
        } else {
            RenyiOrder::Order(alpha)
        })
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            RenyiOrder::Order(a) => RenyiOrder::new(a),
            RenyiOrder::Shannon => Ok(self),
        }
    }

    pub fn alpha(self) -> f64 {
        match self {
            RenyiOrder::Order(a) => a,
            RenyiOrder::Shannon => 1.0,
        }
    }
}

/// w̄(j) = w_j / Σ w over the given (positive) similarities.
pub fn normalized_weights(similarities: &[f64]) -> Vec<f64> {
    let total: f64 = similarities.iter().sum();
    similarities.iter().map(|w| w / total).collect()
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Config("entropy of an empty weight vector".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// H_α = ln(Σ w^α) / (1 − α), or −Σ w ln w in the Shannon limit. The result
/// is clamped into its theoretical range [0, ln n] to absorb rounding.
pub fn renyi_entropy(weights: &[f64], order: RenyiOrder) -> Result<f64> {
    check_weights(weights)?;
    let order = order.validate()?;
    let h = match order {
        RenyiOrder::Shannon => -weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>(),
        RenyiOrder::Order(alpha) => power_sum(weights, alpha).ln() / (1.0 - alpha),
    };
    Ok(h.clamp(0.0, (weights.len() as f64).ln()))
}

fn power_sum(weights: &[f64], alpha: f64) -> f64 {
    weights.iter().filter(|&&w| w > 0.0).map(|w| w.powf(alpha)).sum()
}

/// D_α = (Σ w^α)^{1/(1−α)}, equivalently exp(H_α); the effective number of
/// neighbors, in [1, n].
pub fn diversity_index(weights: &[f64], order: RenyiOrder) -> Result<f64> {
    let order = order.validate()?;
    let d = match order {
        RenyiOrder::Shannon => renyi_entropy(weights, order)?.exp(),
        RenyiOrder::Order(alpha) => {
            check_weights(weights)?;
            power_sum(weights, alpha).powf(1.0 / (1.0 - alpha))
        }
    };
    Ok(d.clamp(1.0, weights.len() as f64))
}

/// Nearest integer, halves rounded away from zero, never below 1.
pub fn effective_count(diversity: f64) -> usize {
    (diversity.round() as usize).max(1)
}
