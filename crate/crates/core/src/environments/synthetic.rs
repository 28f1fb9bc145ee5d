use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_played, complement, validate_request, Environment, RegretTerms};
use crate::context::ObservedContext;
use crate::error::{CabError, Result};
use crate::linear_model::dot;
use crate::policies::oracle_action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_arms: usize,
    pub n_known: usize,
    /// Standard deviation of the Gaussian reward noise.
    #[serde(default)]
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn validate(&self, budget: usize) -> Result<()> {
        if self.n_features == 0 {
            return Err(CabError::Config("synthetic environment needs n_features >= 1".into()));
        }
        if self.n_arms == 0 {
            return Err(CabError::Config("synthetic environment needs n_arms >= 1".into()));
        }
        if self.n_known + budget > self.n_features {
            return Err(CabError::Config(format!(
                "known ({}) + budget ({budget}) exceeds n_features ({})",
                self.n_known, self.n_features
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(CabError::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Ground-truth parameters of a synthetic instance.
///
/// Arm weights split into an arm-specific part on the known columns and bias,
/// and a part on the unknown columns shared by every arm. Unknown column `i`
/// is the linear function `wᵢᵀc^V` of the known context, and its relevance
/// vector is `θᵢ = βᵢ·wᵢ`, where `βᵢ` is the shared arm weight. With this
/// construction the expected reward of revealing a set of columns is exactly
/// additive in per-column terms `c^Vᵀθᵢ`, whichever arm is then played.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// `K` vectors of length `N + 1`.
    pub arm_weights: Vec<Vec<f64>>,
    /// `N` vectors of length `N + 1`; rows for known columns are zero.
    pub feature_weights: Vec<Vec<f64>>,
    pub known_set: Vec<usize>,
}

impl SyntheticTruth {
    pub fn n_features(&self) -> usize {
        self.feature_weights.len()
    }

    pub fn selectable(&self) -> Vec<usize> {
        complement(self.n_features(), &self.known_set)
    }

    /// Expected reward of playing `arm` on `ctx`.
    pub fn expected_reward(&self, ctx: &ObservedContext, arm: usize) -> f64 {
        dot(ctx.values(), &self.arm_weights[arm])
    }

    /// `c^Vᵀθᵢ`, the expected reward contribution of revealing feature `i`.
    pub fn feature_value(&self, known: &ObservedContext, feature: usize) -> f64 {
        dot(known.values(), &self.feature_weights[feature])
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLinearEnv {
    spec: SyntheticSpec,
    truth: SyntheticTruth,
    /// Maps from the bias-augmented known context to each unknown column.
    column_maps: Vec<Vec<f64>>,
    contexts: ChaCha8Rng,
    noise: ChaCha8Rng,
    current: Vec<f64>,
    known: ObservedContext,
}

impl SyntheticLinearEnv {
    /// Draws a reproducible instance from `seed`.
    ///
    /// `budget` is only used to validate `n_known + budget <= n_features`.
    pub fn generate(spec: SyntheticSpec, budget: usize, seed: u64) -> Result<Self> {
        spec.validate(budget)?;
        let n = spec.n_features;
        let dim = n + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut known_set = index::sample(&mut rng, n, spec.n_known).into_vec();
        known_set.sort_unstable();
        let unknown = complement(n, &known_set);
        // Known columns plus the bias coordinate.
        let mut support = known_set.clone();
        support.push(n);

        let half = std::f64::consts::FRAC_1_SQRT_2;
        let shared = sample_ball(&mut rng, unknown.len(), half);
        let arm_weights = (0..spec.n_arms)
            .map(|_| {
                let own = sample_ball(&mut rng, support.len(), half);
                let mut w = vec![0.0; dim];
                for (&j, v) in support.iter().zip(own) {
                    w[j] = v;
                }
                for (&i, &beta) in unknown.iter().zip(&shared) {
                    w[i] = beta;
                }
                w
            })
            .collect();

        // Keeps |c_i| <= 1/sqrt(2 (N-V)) so the unknown block has norm <= 1/sqrt(2).
        let map_radius = if unknown.is_empty() {
            0.0
        } else {
            (1.0 / (3.0 * unknown.len() as f64)).sqrt()
        };
        let mut column_maps = vec![vec![0.0; dim]; n];
        let mut feature_weights = vec![vec![0.0; dim]; n];
        for (&i, &beta) in unknown.iter().zip(&shared) {
            let map = sample_ball(&mut rng, support.len(), map_radius);
            for (&j, v) in support.iter().zip(map) {
                column_maps[i][j] = v;
                feature_weights[i][j] = beta * v;
            }
        }

        let mut contexts = ChaCha8Rng::seed_from_u64(seed);
        contexts.set_stream(1);
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        noise.set_stream(2);

        Ok(Self {
            spec,
            known: ObservedContext::bias_only(n),
            truth: SyntheticTruth {
                arm_weights,
                feature_weights,
                known_set,
            },
            column_maps,
            contexts,
            noise,
            current: vec![0.0; n],
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn truth(&self) -> &SyntheticTruth {
        &self.truth
    }

    /// Raw feature values of the current event (no bias).
    pub fn current_context(&self) -> &[f64] {
        &self.current
    }
}

impl Environment for SyntheticLinearEnv {
    fn n_features(&self) -> usize {
        self.spec.n_features
    }

    fn n_arms(&self) -> usize {
        self.spec.n_arms
    }

    fn known_set(&self) -> &[usize] {
        &self.truth.known_set
    }

    fn begin_step(&mut self, _t: usize) -> Result<ObservedContext> {
        let n = self.spec.n_features;
        let known_values = sample_ball(
            &mut self.contexts,
            self.truth.known_set.len(),
            std::f64::consts::FRAC_1_SQRT_2,
        );
        let mut full = vec![0.0; n];
        for (&j, v) in self.truth.known_set.iter().zip(known_values) {
            full[j] = v;
        }
        let known = ObservedContext::from_full(&full, &self.truth.known_set)?;
        for i in self.truth.selectable() {
            full[i] = dot(known.values(), &self.column_maps[i]);
        }
        self.current = full;
        self.known = known.clone();
        Ok(known)
    }

    fn reveal(&self, requested: &[usize]) -> Result<ObservedContext> {
        validate_request(self.spec.n_features, &self.truth.known_set, requested)?;
        let mut ctx = self.known.clone();
        ctx.reveal(&self.current, requested)?;
        Ok(ctx)
    }

    fn reward(&mut self, arm: usize, played: &ObservedContext) -> Result<f64> {
        if arm >= self.spec.n_arms {
            return Err(CabError::Protocol(format!("arm {arm} out of range")));
        }
        check_played(&self.current, played)?;
        let z: f64 = self.noise.sample(StandardNormal);
        Ok(self.truth.expected_reward(played, arm) + self.spec.noise * z)
    }

    fn regret_terms(
        &self,
        known: &ObservedContext,
        played: &ObservedContext,
        arm: usize,
    ) -> Result<RegretTerms> {
        if arm >= self.spec.n_arms {
            return Err(CabError::Protocol(format!("arm {arm} out of range")));
        }
        let known_set = &self.truth.known_set;
        let chosen: Vec<usize> = played
            .observed()
            .into_iter()
            .filter(|i| known_set.binary_search(i).is_err())
            .collect();
        let (best_set, best_arm) = oracle_action(&self.truth, known, &self.current, chosen.len())?;
        let mut optimal_observed = known_set.clone();
        optimal_observed.extend_from_slice(&best_set);
        let optimal_ctx = ObservedContext::from_full(&self.current, &optimal_observed)?;

        let optimal = self.truth.expected_reward(&optimal_ctx, best_arm);
        let arm_regret = optimal - self.truth.expected_reward(&optimal_ctx, arm);
        let feature_regret = best_set
            .iter()
            .map(|&i| self.truth.feature_value(known, i))
            .sum::<f64>()
            - chosen
                .iter()
                .map(|&i| self.truth.feature_value(known, i))
                .sum::<f64>();
        Ok(RegretTerms {
            arm: arm_regret,
            feature: feature_regret,
            total: arm_regret + feature_regret,
            direct: optimal - self.truth.expected_reward(played, arm),
        })
    }
}

/// Uniform draw from the `dim`-dimensional ball of the given radius.
fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let scale = if norm > 0.0 {
        radius * u.powf(1.0 / dim as f64) / norm
    } else {
        0.0
    };
    v.iter_mut().for_each(|x| *x *= scale);
    v
}
