use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{BudgetSpec, EnvironmentConfig, ExperimentConfig, PolicyConfig};
use super::seed::{environment_seed, policy_seed};
use crate::context::ObservedContext;
use crate::environments::{
    load_dataset, Dataset, DatasetEnv, Environment, FeatureGroups, NonstationaryEnv, RegretTerms,
    SyntheticLinearEnv, SyntheticSpec,
};
use crate::error::{CabError, Result};
use crate::policies::{CabPolicy, FeatureLayout, PolicyParams, Variant};

/// What happened at one step of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Zero-based step index.
    pub t: usize,
    pub features: Vec<usize>,
    pub arm: usize,
    pub reward: f64,
    /// Ground-truth regret, synthetic environments only.
    pub regret: Option<RegretTerms>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub records: Vec<StepRecord>,
}

impl TrialResult {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// `100 · Σr / T`.
    pub fn total_average_reward(&self) -> f64 {
        100.0 * self.total_reward() / self.horizon() as f64
    }

    pub fn arms(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.arm).collect()
    }

    /// Cumulative decomposed regret `Σ(arm + feature)`, when available.
    pub fn cumulative_regret(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.regret.map(|g| g.total))
            .sum()
    }

    /// Cumulative regret computed from expected rewards directly.
    pub fn cumulative_direct_regret(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.regret.map(|g| g.direct))
            .sum()
    }
}

/// Runs one trial of the bandit protocol.
///
/// Each step: observe the known context, let the policy request columns
/// (possibly in stages), reveal them, choose an arm, observe its reward and
/// learn. Feature selection and arm selection draw from separate streams, so
/// two policies that reveal the same columns consume arm randomness
/// identically.
pub fn run_trial(
    env: &mut dyn Environment,
    policy: &mut CabPolicy,
    horizon: usize,
    feature_rng: &mut ChaCha8Rng,
    arm_rng: &mut ChaCha8Rng,
) -> Result<TrialResult> {
    if let Some(max) = env.max_horizon() {
        if horizon > max {
            return Err(CabError::Config(format!(
                "horizon {horizon} exceeds the environment's {max} events"
            )));
        }
    }
    let mut records = Vec::with_capacity(horizon);
    let mut track_regret = true;
    for t in 0..horizon {
        let known = env.begin_step(t)?;
        let (request, step_ctx) = {
            let env_ref: &dyn Environment = env;
            let mut reveal = |mask: &[usize]| -> Result<ObservedContext> { env_ref.reveal(mask) };
            policy.choose_features_with_reveal(&known, &mut reveal, feature_rng)?
        };
        let arm = policy.choose_arm(&step_ctx, arm_rng)?;
        let reward = env.reward(arm, &step_ctx)?;
        let regret = if track_regret {
            match env.regret_terms(&known, &step_ctx, arm) {
                Ok(terms) => Some(terms),
                Err(CabError::Unsupported(_)) => {
                    track_regret = false;
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        policy.learn(&known, &step_ctx, &request, arm, reward)?;
        records.push(StepRecord {
            t,
            features: request.features,
            arm,
            reward,
            regret,
        });
    }
    Ok(TrialResult { records })
}

/// Random streams for one policy in one trial, all derived from a single seed.
pub struct PolicyStreams {
    pub construction: ChaCha8Rng,
    pub features: ChaCha8Rng,
    pub arms: ChaCha8Rng,
}

impl PolicyStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        Self {
            construction: stream(0),
            features: stream(1),
            arms: stream(2),
        }
    }
}

/// Builds per-trial environments; datasets are loaded once and shared.
#[derive(Debug, Clone)]
pub enum EnvironmentSource {
    Synthetic(SyntheticSpec),
    Dataset {
        data: Arc<Dataset>,
        known_fraction: f64,
        groups: Option<FeatureGroups>,
        nonstationary: bool,
    },
}

impl EnvironmentSource {
    pub fn from_config(config: &EnvironmentConfig) -> Result<Self> {
        Ok(match config {
            EnvironmentConfig::Synthetic {
                n_features,
                n_arms,
                n_known,
                noise,
            } => EnvironmentSource::Synthetic(SyntheticSpec {
                n_features: *n_features,
                n_arms: *n_arms,
                n_known: *n_known,
                noise: *noise,
            }),
            EnvironmentConfig::Dataset {
                path,
                label,
                known_fraction,
                groups,
                nonstationary,
            } => {
                let data = load_dataset(path, label)?;
                let groups = groups.as_deref().map(FeatureGroups::from_file).transpose()?;
                EnvironmentSource::Dataset {
                    data: Arc::new(data),
                    known_fraction: *known_fraction,
                    groups,
                    nonstationary: *nonstationary,
                }
            }
        })
    }

    /// Rows skipped while loading, for dataset sources.
    pub fn rejected_rows(&self) -> usize {
        match self {
            EnvironmentSource::Dataset { data, .. } => data.rejected_rows,
            EnvironmentSource::Synthetic(_) => 0,
        }
    }

    pub fn build(&self, seed: u64, horizon: usize, budget: usize) -> Result<Box<dyn Environment + Send>> {
        Ok(match self {
            EnvironmentSource::Synthetic(spec) => Box::new(SyntheticLinearEnv::generate(*spec, budget, seed)?),
            EnvironmentSource::Dataset {
                data,
                known_fraction,
                groups,
                nonstationary,
            } => {
                let base = DatasetEnv::new(data.clone(), *known_fraction, groups.clone(), horizon, seed)?;
                if *nonstationary {
                    Box::new(NonstationaryEnv::new(base, seed))
                } else {
                    Box::new(base)
                }
            }
        })
    }
}

/// Aggregated results of one (policy, budget) cell over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub label: String,
    pub variant: Variant,
    /// `U` as written in reports: a count or the configured fraction.
    pub budget_label: String,
    pub budget: usize,
    /// Successful trials.
    pub trials: usize,
    pub failures: Vec<(usize, String)>,
    /// Mean and sample std of the per-trial `100 · Σr / T`.
    pub mean: f64,
    pub std: f64,
    /// Mean over trials of `100 · Σ_{s ≤ t} r_s / t`, one entry per step.
    pub reward_curve: Vec<f64>,
    /// Mean cumulative regret per step against the best action with this
    /// cell's budget, synthetic environments only.
    pub regret_curve: Option<Vec<f64>>,
    pub regret: Option<RegretSummary>,
}

impl CellSummary {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretSummary {
    /// Mean and sample std of the final cumulative regret.
    pub mean: f64,
    pub std: f64,
    pub mean_arm: f64,
    pub mean_feature: f64,
    /// Largest per-trial `|Σ(arm + feature) − Σ direct|`.
    pub max_identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub horizon: usize,
    pub trials: usize,
    pub rejected_rows: usize,
    pub cells: Vec<CellSummary>,
}

/// Per-trial reduction kept for aggregation.
struct TrialOutcome {
    average_reward: f64,
    reward_curve: Vec<f64>,
    regret: Option<(Vec<f64>, f64, f64, f64)>,
}

fn reduce(result: &TrialResult) -> TrialOutcome {
    let mut sum = 0.0;
    let reward_curve = result
        .records
        .iter()
        .enumerate()
        .map(|(t, r)| {
            sum += r.reward;
            100.0 * sum / (t + 1) as f64
        })
        .collect();
    let regret = result.cumulative_regret().map(|_| {
        let mut acc = 0.0;
        let (mut arm, mut feature, mut direct) = (0.0, 0.0, 0.0);
        let curve = result
            .records
            .iter()
            .map(|r| {
                let g = r.regret.expect("regret tracked on every step");
                acc += g.total;
                arm += g.arm;
                feature += g.feature;
                direct += g.direct;
                acc
            })
            .collect();
        (curve, arm, feature, direct)
    });
    TrialOutcome {
        average_reward: result.total_average_reward(),
        reward_curve,
        regret,
    }
}

struct Cell {
    policy: PolicyConfig,
    spec: BudgetSpec,
    budget: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn policy_params(config: &ExperimentConfig, policy: &PolicyConfig, budget: usize) -> PolicyParams {
    let mut params = PolicyParams::new(policy.variant, policy.alpha(), budget);
    params.decay = policy.decay;
    params.window = policy.window;
    params.model = config.model_options();
    params.stop_time = policy
        .stop_fraction
        .map(|f| crate::environments::known_count(config.horizon, f));
    params
}

/// Runs every (policy, budget, trial) combination and aggregates per cell.
///
/// Trials run in parallel; each owns its environment, policy and random
/// streams, so results do not depend on the degree of parallelism. A failed
/// trial is recorded on its cell and excluded from the statistics.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let source = EnvironmentSource::from_config(&config.environment)?;
    run_with_source(config, &source)
}

pub fn run_with_source(config: &ExperimentConfig, source: &EnvironmentSource) -> Result<ExperimentSummary> {
    config.validate_shape()?;
    let probe = source.build(environment_seed(config.seed, 0), config.horizon, 0)?;
    if let Some(max) = probe.max_horizon() {
        if config.horizon > max {
            return Err(CabError::Config(format!(
                "horizon {} exceeds the {max} available events",
                config.horizon
            )));
        }
    }
    let layout = FeatureLayout::of(probe.as_ref());
    let (units_total, pool) = match &layout.groups {
        Some(g) => (g.len(), g.len()),
        None => (layout.n_features, layout.n_features - layout.known_set.len()),
    };

    let mut cells = Vec::new();
    for policy in &config.policies {
        for spec in policy.budget_specs() {
            let budget = spec.resolve(units_total, pool);
            // Construction validates the budget against the pool before any trial runs.
            CabPolicy::new(
                policy_params(config, policy, budget),
                layout.clone(),
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .map_err(|e| CabError::Config(format!("{}: {e}", policy.label())))?;
            if let EnvironmentSource::Synthetic(s) = source {
                s.validate(budget)?;
            }
            cells.push(Cell {
                policy: policy.clone(),
                spec,
                budget,
            });
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |r| (c, r)))
        .collect();
    let run_one = |&(c, trial): &(usize, usize)| -> Result<TrialOutcome> {
        let cell = &cells[c];
        let mut env = source.build(environment_seed(config.seed, trial), config.horizon, cell.budget)?;
        let label = cell.policy.label();
        let mut streams = PolicyStreams::from_seed(policy_seed(config.seed, &label, &cell.spec.label(), trial));
        let mut policy = CabPolicy::new(
            policy_params(config, &cell.policy, cell.budget),
            FeatureLayout::of(env.as_ref()),
            &mut streams.construction,
        )?;
        let result = run_trial(
            env.as_mut(),
            &mut policy,
            config.horizon,
            &mut streams.features,
            &mut streams.arms,
        )?;
        Ok(reduce(&result))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CabError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| jobs.par_iter().map(run_one).collect());

    let mut summaries = Vec::with_capacity(cells.len());
    let mut outcomes = outcomes.into_iter();
    for cell in &cells {
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for trial in 0..config.trials {
            match outcomes.next().expect("one outcome per job") {
                Ok(o) => ok.push(o),
                Err(e) => failures.push((trial, e.to_string())),
            }
        }
        summaries.push(aggregate(cell, ok, failures, config.horizon));
    }
    Ok(ExperimentSummary {
        horizon: config.horizon,
        trials: config.trials,
        rejected_rows: source.rejected_rows(),
        cells: summaries,
    })
}

fn aggregate(cell: &Cell, ok: Vec<TrialOutcome>, failures: Vec<(usize, String)>, horizon: usize) -> CellSummary {
    let averages: Vec<f64> = ok.iter().map(|o| o.average_reward).collect();
    let (mean, std) = mean_std(&averages);
    let n = ok.len() as f64;
    let mut reward_curve = vec![0.0; if ok.is_empty() { 0 } else { horizon }];
    for o in &ok {
        for (acc, v) in reward_curve.iter_mut().zip(&o.reward_curve) {
            *acc += v / n;
        }
    }
    let tracked = !ok.is_empty() && ok.iter().all(|o| o.regret.is_some());
    let (regret_curve, regret) = if tracked {
        let mut curve = vec![0.0; horizon];
        let mut finals = Vec::with_capacity(ok.len());
        let (mut arm, mut feature, mut gap) = (0.0, 0.0, 0.0f64);
        for o in &ok {
            let (c, a, f, direct) = o.regret.as_ref().expect("tracked");
            for (acc, v) in curve.iter_mut().zip(c) {
                *acc += v / n;
            }
            let total = *c.last().unwrap_or(&0.0);
            finals.push(total);
            arm += a / n;
            feature += f / n;
            gap = gap.max((total - direct).abs());
        }
        let (mean, std) = mean_std(&finals);
        (
            Some(curve),
            Some(RegretSummary {
                mean,
                std,
                mean_arm: arm,
                mean_feature: feature,
                max_identity_gap: gap,
            }),
        )
    } else {
        (None, None)
    };
    CellSummary {
        label: cell.policy.label(),
        variant: cell.policy.variant,
        budget_label: cell.spec.label(),
        budget: cell.budget,
        trials: ok.len(),
        failures,
        mean,
        std,
        reward_curve,
        regret_curve,
        regret,
    }
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Budget `U`. Values in `(0, 1)` are fractions of `N`; others are counts.
    Budget,
    /// CATS-fix cutoff as a fraction of the horizon. Only CATS-fix policies run.
    StopTime,
    Alpha,
}

impl std::str::FromStr for SweepParam {
    type Err = CabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" | "u" | "budget" => Ok(SweepParam::Budget),
            "T'" | "stop" | "stop_fraction" | "stop-time" => Ok(SweepParam::StopTime),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(CabError::Config(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

/// Rewrites `config` so that one run covers every value of `param`.
pub fn sweep_config(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<ExperimentConfig> {
    if values.is_empty() {
        return Err(CabError::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CabError::Config(format!("sweep value {v} must be finite and >= 0")));
    }
    let mut out = config.clone();
    out.policies.clear();
    for policy in &config.policies {
        match param {
            SweepParam::Budget => {
                let mut p = policy.clone();
                p.budgets.clear();
                p.budget_fractions.clear();
                for &v in values {
                    if v > 0.0 && v < 1.0 {
                        p.budget_fractions.push(v);
                    } else if v.fract() == 0.0 {
                        p.budgets.push(v as usize);
                    } else {
                        return Err(CabError::Config(format!(
                            "budget value {v} is neither a fraction in (0, 1) nor a count"
                        )));
                    }
                }
                out.policies.push(p);
            }
            SweepParam::StopTime => {
                if policy.variant != Variant::CatsFix {
                    continue;
                }
                for &v in values {
                    if v > 1.0 {
                        return Err(CabError::Config(format!("stop fraction {v} exceeds 1")));
                    }
                    let mut p = policy.clone();
                    p.stop_fraction = Some(v);
                    p.label = Some(format!("{}@T'={v}", policy.label()));
                    out.policies.push(p);
                }
            }
            SweepParam::Alpha => {
                for &v in values {
                    let mut p = policy.clone();
                    p.alpha = Some(v);
                    p.label = Some(format!("{}@alpha={v}", policy.label()));
                    out.policies.push(p);
                }
            }
        }
    }
    out.validate_shape()?;
    Ok(out)
}

pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<ExperimentSummary> {
    run_experiment(&sweep_config(config, param, values)?)
}
