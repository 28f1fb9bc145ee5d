use serde::{Deserialize, Serialize};

use crate::error::{CabError, Result};

/// Discount `λ(t)` applied to feature-model precision at step `t` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecaySchedule {
    /// `λ(t) = gamma` for every step; `gamma = 1` is the stationary case.
    Constant { gamma: f64 },
    /// Ratio of consecutive GP-UCB confidence coefficients,
    /// `λ(t) = β(t-1) / β(t)` with `β(t) = 2·ln(t²π² / (6δ))` and `λ(1) = 1`.
    /// Forgets quickly early on and approaches 1 as `t` grows.
    GpUcb { delta: f64 },
}

impl Default for DecaySchedule {
    fn default() -> Self {
        DecaySchedule::Constant { gamma: 1.0 }
    }
}

impl DecaySchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DecaySchedule::Constant { gamma } if !(gamma > 0.0 && gamma <= 1.0) => Err(
                CabError::Config(format!("decay gamma must lie in (0, 1], got {gamma}")),
            ),
            DecaySchedule::GpUcb { delta } if !(delta > 0.0 && delta < 1.0) => Err(
                CabError::Config(format!("GP-UCB delta must lie in (0, 1), got {delta}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        match *self {
            DecaySchedule::Constant { gamma } => gamma,
            DecaySchedule::GpUcb { delta } => {
                if step <= 1 {
                    return 1.0;
                }
                let beta = |t: usize| {
                    let t = t as f64;
                    2.0 * (t * t * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln()
                };
                beta(step - 1) / beta(step)
            }
        }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, DecaySchedule::Constant { gamma } if *gamma == 1.0)
    }
}
