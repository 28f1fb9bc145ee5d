//! Context-attentive bandit policies.
//!
//! Every policy follows the same three-phase step: pick which unknown columns
//! to observe from the known context, pick an arm from the revealed context,
//! then learn from the reward. The CATS family keeps one Gaussian linear model
//! per arm (trained on the revealed context) and one per selectable feature
//! (trained on the known context), and scores both layers by posterior
//! sampling or, for CALINUCB, by an upper confidence bound.

mod oracle;
mod schedule;

pub use oracle::oracle_action;
pub use schedule::DecaySchedule;

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::ObservedContext;
use crate::environments::{complement, Environment, FeatureGroups};
use crate::error::{CabError, Result};
use crate::linear_model::{dot, GaussianLinearModel, ModelOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Thompson sampling over feature and arm models. With a decaying
    /// schedule this is the nonstationary NCATS.
    Cats,
    /// CATS that stops exploring features after a cutoff step.
    CatsFix,
    /// CATS that reveals the budget one unit at a time, rescoring against the
    /// grown context after each reveal.
    CatsStaged,
    /// CATS with UCB scores in place of posterior samples.
    Calinucb,
    /// Restricted-context Thompson sampling: feature models see only the bias.
    Tsrc,
    /// TSRC whose feature models forget events older than a window.
    Wtsrc,
    /// Linear TS on the known columns plus a random subset fixed up front.
    RandomFix,
    /// Linear TS on the known columns plus a fresh random subset each step.
    RandomEi,
    /// Linear TS on the full context.
    OracleFull,
    /// Linear TS on the known columns only.
    KnownOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cats => "CATS",
            Variant::CatsFix => "CATS-fix",
            Variant::CatsStaged => "CATS-Staged",
            Variant::Calinucb => "CALINUCB",
            Variant::Tsrc => "TSRC",
            Variant::Wtsrc => "WTSRC",
            Variant::RandomFix => "Random-fix",
            Variant::RandomEi => "Random-EI",
            Variant::OracleFull => "Oracle-full",
            Variant::KnownOnly => "Known-only",
        }
    }

    pub const ALL: [Variant; 10] = [
        Variant::Cats,
        Variant::CatsFix,
        Variant::CatsStaged,
        Variant::Calinucb,
        Variant::Tsrc,
        Variant::Wtsrc,
        Variant::RandomFix,
        Variant::RandomEi,
        Variant::OracleFull,
        Variant::KnownOnly,
    ];

    fn selects_features(self) -> bool {
        !matches!(self, Variant::OracleFull | Variant::KnownOnly)
    }
}

/// Accepts the report name (`CATS-fix`) or the config key (`cats-fix`), case-insensitively.
impl std::str::FromStr for Variant {
    type Err = CabError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CabError::Config(format!("unknown policy variant '{s}'")))
    }
}

fn default_window() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub variant: Variant,
    /// Exploration scale for posterior sampling or UCB widths.
    pub alpha: f64,
    #[serde(default)]
    pub decay: DecaySchedule,
    /// Features (or groups) requested per step.
    pub budget: usize,
    /// Last step (1-based) on which CATS-fix explores features.
    #[serde(default)]
    pub stop_time: Option<usize>,
    /// WTSRC window length in steps.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub model: ModelOptions,
}

impl PolicyParams {
    pub fn new(variant: Variant, alpha: f64, budget: usize) -> Self {
        Self {
            variant,
            alpha,
            decay: DecaySchedule::default(),
            budget,
            stop_time: None,
            window: default_window(),
            model: ModelOptions::default(),
        }
    }
}

/// Which columns exist, which are free, and how the rest are grouped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    pub n_features: usize,
    pub n_arms: usize,
    pub known_set: Vec<usize>,
    pub groups: Option<FeatureGroups>,
}

impl FeatureLayout {
    pub fn of(env: &dyn Environment) -> Self {
        Self {
            n_features: env.n_features(),
            n_arms: env.n_arms(),
            known_set: env.known_set().to_vec(),
            groups: env.groups().cloned(),
        }
    }
}

/// The columns a policy asked for in one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureRequest {
    /// Requested feature indices, ascending.
    pub features: Vec<usize>,
    /// Selected units (features, or groups in group mode), ascending.
    pub units: Vec<usize>,
    /// Staged selection only: the context each requested feature was scored on.
    pub stage_contexts: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone)]
struct WindowEvent {
    step: usize,
    features: Vec<usize>,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct CabPolicy {
    params: PolicyParams,
    layout: FeatureLayout,
    /// Selection units: singleton features, or groups when configured.
    units: Vec<Vec<usize>>,
    arm_models: Vec<GaussianLinearModel>,
    /// Indexed by feature; `None` for known columns.
    feature_models: Vec<Option<GaussianLinearModel>>,
    fixed_units: Vec<usize>,
    window: VecDeque<WindowEvent>,
    step: usize,
}

impl CabPolicy {
    /// Builds a policy; `rng` is used only to draw Random-fix's fixed subset.
    pub fn new<R: Rng + ?Sized>(params: PolicyParams, layout: FeatureLayout, rng: &mut R) -> Result<Self> {
        if !(params.alpha.is_finite() && params.alpha >= 0.0) {
            return Err(CabError::Config(format!("alpha must be >= 0, got {}", params.alpha)));
        }
        params.decay.validate()?;
        if layout.n_arms == 0 {
            return Err(CabError::Config("need at least one arm".into()));
        }
        let n = layout.n_features;
        if layout.known_set.iter().any(|&i| i >= n) {
            return Err(CabError::Config("known feature index out of range".into()));
        }
        let selectable = complement(n, &layout.known_set);
        let units: Vec<Vec<usize>> = match (&layout.groups, params.variant) {
            (_, Variant::OracleFull) => selectable.iter().map(|&i| vec![i]).collect(),
            (Some(groups), _) => {
                groups.validate(n, &layout.known_set)?;
                groups.members().to_vec()
            }
            (None, _) => selectable.iter().map(|&i| vec![i]).collect(),
        };
        if params.variant.selects_features() && params.budget > units.len() {
            return Err(CabError::Config(format!(
                "budget {} exceeds the {} selectable {}",
                params.budget,
                units.len(),
                if layout.groups.is_some() { "groups" } else { "features" }
            )));
        }
        match params.variant {
            Variant::CatsFix if params.stop_time.is_none() => {
                return Err(CabError::Config("CATS-fix needs a stop time".into()));
            }
            Variant::Wtsrc if params.window == 0 => {
                return Err(CabError::Config("WTSRC window must be >= 1".into()));
            }
            _ => {}
        }

        let dim = n + 1;
        let arm_models = (0..layout.n_arms)
            .map(|_| GaussianLinearModel::with_options(dim, params.model))
            .collect::<Result<Vec<_>>>()?;
        let mut feature_models: Vec<Option<GaussianLinearModel>> = vec![None; n];
        for &i in &selectable {
            feature_models[i] = Some(GaussianLinearModel::with_options(dim, params.model)?);
        }
        let fixed_units = if params.variant == Variant::RandomFix {
            let mut picked = index::sample(rng, units.len(), params.budget).into_vec();
            picked.sort_unstable();
            picked
        } else {
            Vec::new()
        };

        Ok(Self {
            params,
            layout,
            units,
            arm_models,
            feature_models,
            fixed_units,
            window: VecDeque::new(),
            step: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    /// Steps learned so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn arm_model(&self, arm: usize) -> &GaussianLinearModel {
        &self.arm_models[arm]
    }

    pub fn feature_model(&self, feature: usize) -> Option<&GaussianLinearModel> {
        self.feature_models.get(feature).and_then(Option::as_ref)
    }

    /// Units requested per step after resolving the variant.
    pub fn effective_budget(&self) -> usize {
        match self.params.variant {
            Variant::OracleFull => self.units.len(),
            Variant::KnownOnly => 0,
            _ => self.params.budget,
        }
    }

    /// Fixed subset drawn at construction (Random-fix only), as unit indices.
    pub fn fixed_units(&self) -> &[usize] {
        &self.fixed_units
    }

    fn exploring_features(&self) -> bool {
        match (self.params.variant, self.params.stop_time) {
            (Variant::CatsFix, Some(stop)) => self.step < stop,
            _ => true,
        }
    }

    fn uses_bias_only_context(&self) -> bool {
        matches!(self.params.variant, Variant::Tsrc | Variant::Wtsrc)
    }

    /// Weights used to score each selectable feature this step: posterior
    /// samples, or posterior means once CATS-fix stops exploring.
    fn feature_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Option<DVector<f64>>> {
        let sample = self.exploring_features();
        self.feature_models
            .iter()
            .map(|m| {
                m.as_ref().map(|m| {
                    if sample {
                        m.sample_weights(self.params.alpha, rng)
                    } else {
                        m.mean().clone()
                    }
                })
            })
            .collect()
    }

    /// Score of each feature against `ctx` (indexed by feature, 0 for known columns).
    fn feature_scores<R: Rng + ?Sized>(&self, ctx: &[f64], rng: &mut R) -> Vec<f64> {
        if self.params.variant == Variant::Calinucb {
            return self
                .feature_models
                .iter()
                .map(|m| m.as_ref().map_or(0.0, |m| m.ucb_score(ctx, self.params.alpha)))
                .collect();
        }
        self.feature_weights(rng)
            .iter()
            .map(|w| w.as_ref().map_or(0.0, |w| dot(ctx, w.as_slice())))
            .collect()
    }

    fn unit_score(&self, unit: usize, feature_scores: &[f64]) -> f64 {
        self.units[unit].iter().map(|&i| feature_scores[i]).sum()
    }

    fn request_for(&self, mut units: Vec<usize>) -> FeatureRequest {
        units.sort_unstable();
        let mut features: Vec<usize> = units.iter().flat_map(|&u| self.units[u].iter().copied()).collect();
        features.sort_unstable();
        FeatureRequest {
            features,
            units,
            stage_contexts: Vec::new(),
        }
    }

    /// Picks the columns to observe from the known context.
    ///
    /// CATS-Staged needs to observe values between stages and must go through
    /// [`CabPolicy::choose_features_with_reveal`] instead.
    pub fn choose_features<R: Rng + ?Sized>(
        &self,
        known: &ObservedContext,
        rng: &mut R,
    ) -> Result<FeatureRequest> {
        self.check_known(known)?;
        let budget = self.effective_budget();
        let units = match self.params.variant {
            Variant::KnownOnly => Vec::new(),
            Variant::OracleFull => (0..self.units.len()).collect(),
            Variant::RandomFix => self.fixed_units.clone(),
            Variant::RandomEi => index::sample(rng, self.units.len(), budget).into_vec(),
            Variant::CatsStaged => {
                return Err(CabError::Unsupported(
                    "staged selection needs a reveal callback",
                ))
            }
            Variant::Cats | Variant::CatsFix | Variant::Calinucb | Variant::Tsrc | Variant::Wtsrc => {
                if budget == 0 {
                    return Ok(FeatureRequest::default());
                }
                let bias_only;
                let ctx = if self.uses_bias_only_context() {
                    bias_only = ObservedContext::bias_only(self.layout.n_features);
                    bias_only.values()
                } else {
                    known.values()
                };
                let scores = self.feature_scores(ctx, rng);
                let unit_scores: Vec<f64> = (0..self.units.len())
                    .map(|u| self.unit_score(u, &scores))
                    .collect();
                top_k(&unit_scores, budget)
            }
        };
        Ok(self.request_for(units))
    }

    /// Picks the columns to observe and returns them revealed.
    ///
    /// `reveal` receives the cumulative request and must return the known
    /// context with those columns unmasked. Non-staged variants call it once.
    pub fn choose_features_with_reveal<R: Rng + ?Sized>(
        &self,
        known: &ObservedContext,
        reveal: &mut dyn FnMut(&[usize]) -> Result<ObservedContext>,
        rng: &mut R,
    ) -> Result<(FeatureRequest, ObservedContext)> {
        if self.params.variant != Variant::CatsStaged {
            let request = self.choose_features(known, rng)?;
            let ctx = reveal(&request.features)?;
            return Ok((request, ctx));
        }
        self.check_known(known)?;
        let budget = self.effective_budget();
        if budget == 0 {
            return Ok((FeatureRequest::default(), reveal(&[])?));
        }
        // One posterior draw per step, rescored as the context grows.
        let weights = self.feature_weights(rng);
        let mut ctx = known.clone();
        let mut remaining: Vec<usize> = (0..self.units.len()).collect();
        let mut chosen_units = Vec::with_capacity(budget);
        let mut requested: Vec<usize> = Vec::new();
        let mut stage_contexts = Vec::new();
        for _ in 0..budget {
            let scores: Vec<f64> = weights
                .iter()
                .map(|w| w.as_ref().map_or(0.0, |w| dot(ctx.values(), w.as_slice())))
                .collect();
            let remaining_scores: Vec<f64> =
                remaining.iter().map(|&u| self.unit_score(u, &scores)).collect();
            let pick = top_k(&remaining_scores, 1)[0];
            let unit = remaining.remove(pick);
            for &i in &self.units[unit] {
                stage_contexts.push((i, ctx.values().to_vec()));
                requested.push(i);
            }
            chosen_units.push(unit);
            ctx = reveal(&requested)?;
        }
        let mut request = self.request_for(chosen_units);
        stage_contexts.sort_by_key(|(i, _)| *i);
        request.stage_contexts = stage_contexts;
        Ok((request, ctx))
    }

    /// Picks an arm from the revealed context. Ties go to the lowest index.
    pub fn choose_arm<R: Rng + ?Sized>(&self, ctx: &ObservedContext, rng: &mut R) -> Result<usize> {
        if ctx.n_features() != self.layout.n_features {
            return Err(CabError::InvalidDimension("context width mismatch".into()));
        }
        let x = ctx.values();
        let scores: Vec<f64> = if self.params.variant == Variant::Calinucb {
            self.arm_models
                .iter()
                .map(|m| m.ucb_score(x, self.params.alpha))
                .collect()
        } else {
            self.arm_models
                .iter()
                .map(|m| dot(x, m.sample_weights(self.params.alpha, rng).as_slice()))
                .collect()
        };
        Ok(argmax(&scores))
    }

    /// Updates the arm model of `arm` with the revealed context and every
    /// requested feature's model with the known context, both on the same reward.
    pub fn learn(
        &mut self,
        known: &ObservedContext,
        step_ctx: &ObservedContext,
        request: &FeatureRequest,
        arm: usize,
        reward: f64,
    ) -> Result<()> {
        if arm >= self.arm_models.len() {
            return Err(CabError::Protocol(format!(
                "arm {arm} out of range for {} arms",
                self.arm_models.len()
            )));
        }
        if request.features.iter().any(|&i| self.feature_model(i).is_none()) {
            return Err(CabError::Protocol("request contains a non-selectable feature".into()));
        }
        self.arm_models[arm].update(step_ctx.values(), reward, 1.0)?;

        let step = self.step + 1;
        let decay = self.params.decay.at(step);
        match self.params.variant {
            Variant::Cats | Variant::Calinucb => {
                self.update_features(&request.features, known.values(), reward, decay)?;
            }
            Variant::CatsFix => {
                if self.exploring_features() {
                    self.update_features(&request.features, known.values(), reward, decay)?;
                }
            }
            Variant::CatsStaged => {
                for (i, ctx) in &request.stage_contexts {
                    self.update_features(&[*i], ctx, reward, decay)?;
                }
            }
            Variant::Tsrc => {
                let bias = ObservedContext::bias_only(self.layout.n_features);
                self.update_features(&request.features, bias.values(), reward, decay)?;
            }
            Variant::Wtsrc => {
                let bias = ObservedContext::bias_only(self.layout.n_features);
                self.update_features(&request.features, bias.values(), reward, 1.0)?;
                self.window.push_back(WindowEvent {
                    step,
                    features: request.features.clone(),
                    reward,
                });
                while let Some(oldest) = self.window.front() {
                    if oldest.step + self.params.window > step {
                        break;
                    }
                    let event = self.window.pop_front().expect("front exists");
                    for i in event.features {
                        if let Some(model) = self.feature_models[i].as_mut() {
                            model.downdate(bias.values(), event.reward)?;
                        }
                    }
                }
            }
            Variant::RandomFix | Variant::RandomEi | Variant::OracleFull | Variant::KnownOnly => {}
        }
        self.step = step;
        Ok(())
    }

    fn update_features(&mut self, features: &[usize], ctx: &[f64], reward: f64, decay: f64) -> Result<()> {
        for &i in features {
            if let Some(model) = self.feature_models[i].as_mut() {
                model.update(ctx, reward, decay)?;
            }
        }
        Ok(())
    }

    fn check_known(&self, known: &ObservedContext) -> Result<()> {
        if known.n_features() != self.layout.n_features {
            return Err(CabError::InvalidDimension("context width mismatch".into()));
        }
        if known.observed() != self.layout.known_set {
            return Err(CabError::Protocol(
                "known context must observe exactly the known set".into(),
            ));
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores; ties go to the lower index. Ascending output.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// First index of the maximum score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
