//! Context/reward generators that follow the context-attentive bandit protocol.
//!
//! Each step the environment draws an event, serves its known columns, reveals
//! requested columns on demand (possibly several times within one step for
//! staged selection) and finally scores the played arm.

mod dataset;
mod groups;
mod nonstationary;
mod synthetic;

pub use dataset::{known_count, load_dataset, Dataset, DatasetEnv};
pub use groups::FeatureGroups;
pub use nonstationary::NonstationaryEnv;
pub use synthetic::{SyntheticLinearEnv, SyntheticSpec, SyntheticTruth};

use crate::context::ObservedContext;
use crate::error::{CabError, Result};

/// Per-step regret split into its arm-selection and feature-selection parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretTerms {
    pub arm: f64,
    pub feature: f64,
    /// `arm + feature`.
    pub total: f64,
    /// Expected reward of the optimal action minus that of the played action,
    /// computed without the decomposition.
    pub direct: f64,
}

pub trait Environment {
    fn n_features(&self) -> usize;
    fn n_arms(&self) -> usize;
    /// Freely observed feature indices, ascending.
    fn known_set(&self) -> &[usize];
    /// Feature groups revealed atomically, when the environment defines them.
    fn groups(&self) -> Option<&FeatureGroups> {
        None
    }
    /// Largest horizon the environment can serve, if bounded.
    fn max_horizon(&self) -> Option<usize> {
        None
    }

    /// Moves to event `t` (zero-based) and returns its known context.
    fn begin_step(&mut self, t: usize) -> Result<ObservedContext>;

    /// Known context of the current event plus the requested columns.
    fn reveal(&self, requested: &[usize]) -> Result<ObservedContext>;

    /// Reward of `arm` given the context the agent actually played on.
    fn reward(&mut self, arm: usize, played: &ObservedContext) -> Result<f64>;

    /// Ground-truth regret of the current step. Synthetic environments only.
    fn regret_terms(
        &self,
        _known: &ObservedContext,
        _played: &ObservedContext,
        _arm: usize,
    ) -> Result<RegretTerms> {
        Err(CabError::Unsupported("regret terms need a synthetic environment"))
    }

    /// Indices that may be requested: everything outside the known set.
    fn selectable(&self) -> Vec<usize> {
        complement(self.n_features(), self.known_set())
    }
}

pub(crate) fn complement(n: usize, known: &[usize]) -> Vec<usize> {
    let mut is_known = vec![false; n];
    for &i in known {
        is_known[i] = true;
    }
    (0..n).filter(|&i| !is_known[i]).collect()
}

/// Rejects requests that touch known or out-of-range columns or repeat a column.
pub(crate) fn validate_request(n: usize, known: &[usize], requested: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in known {
        seen[i] = true;
    }
    for &i in requested {
        if i >= n {
            return Err(CabError::Protocol(format!("requested feature {i} out of range")));
        }
        if seen[i] {
            return Err(CabError::Protocol(format!(
                "requested feature {i} is known or already requested"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Checks that every observed entry of `played` matches the current event.
pub(crate) fn check_played(full: &[f64], played: &ObservedContext) -> Result<()> {
    if played.n_features() != full.len() {
        return Err(CabError::Protocol("played context has the wrong width".into()));
    }
    for i in played.observed() {
        if played.values()[i] != full[i] {
            return Err(CabError::Protocol(format!(
                "played context disagrees with the current event at feature {i}"
            )));
        }
    }
    Ok(())
}
