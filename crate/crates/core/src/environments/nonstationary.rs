use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_played, validate_request, DatasetEnv, Environment, FeatureGroups};
use crate::context::ObservedContext;
use crate::error::Result;

/// Dataset replay whose unknown-column/label relationship drifts over time.
///
/// A shuffled copy pairs each row's known columns with the unknown columns and
/// label of another row. Event `t` (zero-based) of a horizon `T` is replaced by
/// its shuffled counterpart with probability `t / T`, drawn independently per
/// event.
#[derive(Debug, Clone)]
pub struct NonstationaryEnv {
    base: DatasetEnv,
    /// `partner[row]` donates unknown columns and label to `row`'s shuffled copy.
    partner: Vec<usize>,
    replaced: Vec<bool>,
    full: Vec<f64>,
    label: usize,
    known: ObservedContext,
}

impl NonstationaryEnv {
    pub fn new(base: DatasetEnv, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let rows = base.data().len();
        let mut partner: Vec<usize> = (0..rows).collect();
        partner.shuffle(&mut rng);
        let horizon = base.horizon();
        let replaced = (0..horizon)
            .map(|t| rng.random::<f64>() < replace_probability(t, horizon))
            .collect();
        let n = base.n_features();
        Self {
            base,
            partner,
            replaced,
            full: vec![0.0; n],
            label: 0,
            known: ObservedContext::bias_only(n),
        }
    }

    pub fn base(&self) -> &DatasetEnv {
        &self.base
    }

    /// Whether event `t` is served from the shuffled copy.
    pub fn is_replaced(&self, t: usize) -> bool {
        self.replaced.get(t).copied().unwrap_or(false)
    }

    /// Raw feature values of the current event.
    pub fn current_context(&self) -> &[f64] {
        &self.full
    }

    pub fn current_label(&self) -> usize {
        self.label
    }
}

/// `t / T`: zero at the first event, approaching one at the last.
pub(crate) fn replace_probability(t: usize, horizon: usize) -> f64 {
    t as f64 / horizon as f64
}

impl Environment for NonstationaryEnv {
    fn n_features(&self) -> usize {
        self.base.n_features()
    }

    fn n_arms(&self) -> usize {
        self.base.n_arms()
    }

    fn known_set(&self) -> &[usize] {
        self.base.known_set()
    }

    fn groups(&self) -> Option<&FeatureGroups> {
        self.base.groups()
    }

    fn max_horizon(&self) -> Option<usize> {
        self.base.max_horizon()
    }

    fn begin_step(&mut self, t: usize) -> Result<ObservedContext> {
        let row = self.base.row_at(t)?;
        let data = self.base.data();
        let mut full = data.row(row).to_vec();
        let mut label = data.label(row);
        if self.replaced[t] {
            let donor = self.partner[row];
            for i in self.base.selectable() {
                full[i] = data.row(donor)[i];
            }
            label = data.label(donor);
        }
        self.known = ObservedContext::from_full(&full, self.base.known_set())?;
        self.full = full;
        self.label = label;
        Ok(self.known.clone())
    }

    fn reveal(&self, requested: &[usize]) -> Result<ObservedContext> {
        validate_request(self.n_features(), self.known_set(), requested)?;
        let mut ctx = self.known.clone();
        ctx.reveal(&self.full, requested)?;
        Ok(ctx)
    }

    fn reward(&mut self, arm: usize, played: &ObservedContext) -> Result<f64> {
        if arm >= self.n_arms() {
            return Err(crate::error::CabError::Protocol(format!("arm {arm} out of range")));
        }
        check_played(&self.full, played)?;
        Ok(if arm == self.label { 1.0 } else { 0.0 })
    }
}
