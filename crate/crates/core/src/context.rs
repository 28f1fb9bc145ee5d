use crate::error::{CabError, Result};

/// A context vector of `n_features + 1` entries with an observation mask.
///
/// Unobserved entries hold 0; the trailing entry is the bias and is always 1.
/// Feature indices are zero-based throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedContext {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ObservedContext {
    /// Context with nothing but the bias observed.
    pub fn bias_only(n_features: usize) -> Self {
        let mut values = vec![0.0; n_features + 1];
        values[n_features] = 1.0;
        Self {
            values,
            mask: vec![false; n_features],
        }
    }

    /// Masks `full` (the `n_features` raw feature values, without bias) down to `observed`.
    pub fn from_full(full: &[f64], observed: &[usize]) -> Result<Self> {
        let mut ctx = Self::bias_only(full.len());
        ctx.reveal(full, observed)?;
        Ok(ctx)
    }

    /// Unmasks `indices`, copying their values from `full`.
    pub fn reveal(&mut self, full: &[f64], indices: &[usize]) -> Result<()> {
        if full.len() != self.mask.len() {
            return Err(CabError::InvalidDimension(format!(
                "context has {} features, source has {}",
                self.mask.len(),
                full.len()
            )));
        }
        for &i in indices {
            if i >= self.mask.len() {
                return Err(CabError::Protocol(format!("feature index {i} out of range")));
            }
            self.values[i] = full[i];
            self.mask[i] = true;
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.mask.len()
    }

    /// All `n_features + 1` entries, bias last.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_observed(&self, feature: usize) -> bool {
        self.mask.get(feature).copied().unwrap_or(false)
    }

    /// Observed feature indices in ascending order (bias excluded).
    pub fn observed(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// L2 norm of the feature part, excluding the bias entry.
    pub fn feature_norm(&self) -> f64 {
        self.values[..self.mask.len()]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
