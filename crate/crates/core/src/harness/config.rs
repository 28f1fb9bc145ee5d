use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CabError, Result};
use crate::linear_model::{FactorUpdate, MeanScale, ModelOptions};
use crate::policies::{DecaySchedule, Variant};

/// One experiment: an environment, a list of policies with their budgets,
/// a horizon and a number of independent trials.
///
/// ```toml
/// horizon = 5000
/// trials = 20
/// seed = 7
/// out_dir = "out"
///
/// [environment]
/// kind = "synthetic"
/// n_features = 8
/// n_arms = 3
/// n_known = 2
/// noise = 0.1
///
/// [[policies]]
/// variant = "cats"
/// alpha = 0.25
/// budgets = [2]
///
/// [[policies]]
/// variant = "cats"
/// label = "NCATS"
/// decay = { kind = "constant", gamma = 0.99 }
/// budget_fractions = [0.2, 0.4]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub mean_scale: MeanScale,
    #[serde(default)]
    pub factor_update: FactorUpdate,
    /// Worker threads for trials; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("cab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Synthetic {
        n_features: usize,
        n_arms: usize,
        n_known: usize,
        #[serde(default)]
        noise: f64,
    },
    Dataset {
        path: PathBuf,
        label: String,
        #[serde(default = "default_known_fraction")]
        known_fraction: f64,
        /// Group file; when present the known set is every ungrouped column.
        #[serde(default)]
        groups: Option<PathBuf>,
        #[serde(default)]
        nonstationary: bool,
    },
}

fn default_known_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: Variant,
    /// Name used in reports; defaults to the variant name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub decay: DecaySchedule,
    /// Absolute budgets to run.
    #[serde(default)]
    pub budgets: Vec<usize>,
    /// Budgets as fractions `p`, resolved to `floor(p·N)` capped at the pool size.
    #[serde(default)]
    pub budget_fractions: Vec<f64>,
    /// CATS-fix cutoff as a fraction of the horizon.
    #[serde(default)]
    pub stop_fraction: Option<f64>,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    100
}

impl PolicyConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            label: None,
            alpha: None,
            decay: DecaySchedule::default(),
            budgets: Vec::new(),
            budget_fractions: Vec::new(),
            stop_fraction: None,
            window: default_window(),
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.variant.name().to_string())
    }

    /// Alpha from the config, or 0.25 for sampling policies and 0.51 for CALINUCB.
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.variant {
            Variant::Calinucb => 0.51,
            _ => 0.25,
        })
    }

    /// Budgets to run for this policy.
    pub fn budget_specs(&self) -> Vec<BudgetSpec> {
        let mut specs: Vec<BudgetSpec> = self.budgets.iter().map(|&u| BudgetSpec::Count(u)).collect();
        specs.extend(self.budget_fractions.iter().map(|&p| BudgetSpec::Fraction(p)));
        if specs.is_empty() && matches!(self.variant, Variant::OracleFull | Variant::KnownOnly) {
            specs.push(BudgetSpec::Count(0));
        }
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Count(usize),
    Fraction(f64),
}

impl BudgetSpec {
    /// `Count(u)` as is; `Fraction(p)` as `floor(p·n_features)` capped at `pool`.
    /// In group mode `n_features` and `pool` are both the number of groups.
    pub fn resolve(self, n_features: usize, pool: usize) -> usize {
        match self {
            BudgetSpec::Count(u) => u,
            BudgetSpec::Fraction(p) => crate::environments::known_count(n_features, p).min(pool),
        }
    }

    /// Text used in the `U` column and curve file names.
    pub fn label(self) -> String {
        match self {
            BudgetSpec::Count(u) => u.to_string(),
            BudgetSpec::Fraction(p) => format!("{p}"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CabError::Config(e.to_string()))?;
        config.validate_shape()?;
        Ok(config)
    }

    /// Reads a TOML config; relative dataset and group paths resolve against
    /// the config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CabError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            if let EnvironmentConfig::Dataset { path, groups, .. } = &mut config.environment {
                *path = rebase(base, path);
                if let Some(g) = groups {
                    *g = rebase(base, g);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            mean_scale: self.mean_scale,
            factor_update: self.factor_update,
        }
    }

    /// Checks everything that does not need the environment to be built.
    pub fn validate_shape(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(CabError::Config("horizon must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(CabError::Config("trials must be >= 1".into()));
        }
        if let EnvironmentConfig::Dataset { known_fraction, .. } = &self.environment {
            if !(0.0..=1.0).contains(known_fraction) {
                return Err(CabError::Config(format!(
                    "known_fraction must lie in [0, 1], got {known_fraction}"
                )));
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for policy in &self.policies {
            let label = policy.label();
            if !labels.insert(label.clone()) {
                return Err(CabError::Config(format!("duplicate policy label '{label}'")));
            }
            if label.is_empty() || label.contains([',', '/', '\\', '\n']) {
                return Err(CabError::Config(format!(
                    "policy label '{label}' must be non-empty without ',', '/' or newlines"
                )));
            }
            policy.decay.validate()?;
            let alpha = policy.alpha();
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(CabError::Config(format!("{label}: alpha must be >= 0")));
            }
            if policy.budget_specs().is_empty() {
                return Err(CabError::Config(format!("{label}: no budgets given")));
            }
            if let Some(p) = policy.budget_fractions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(CabError::Config(format!("{label}: budget fraction {p} outside [0, 1]")));
            }
            match (policy.variant, policy.stop_fraction) {
                (Variant::CatsFix, None) => {
                    return Err(CabError::Config(format!("{label}: CATS-fix needs stop_fraction")))
                }
                (_, Some(f)) if !(0.0..=1.0).contains(&f) => {
                    return Err(CabError::Config(format!("{label}: stop_fraction outside [0, 1]")))
                }
                _ => {}
            }
            if policy.variant == Variant::Wtsrc && policy.window == 0 {
                return Err(CabError::Config(format!("{label}: window must be >= 1")));
            }
        }
        Ok(())
    }
}

fn rebase(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
horizon = 100
trials = 3
seed = 7

[environment]
kind = "synthetic"
n_features = 8
n_arms = 3
n_known = 2
noise = 0.1

[[policies]]
variant = "cats"
budgets = [2]

[[policies]]
variant = "cats"
label = "NCATS"
decay = { kind = "constant", gamma = 0.99 }
budget_fractions = [0.25]

[[policies]]
variant = "cats-fix"
budgets = [1]
stop_fraction = 0.3
"#;

    #[test]
    fn parses_example() {
        let config = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(config.policies.len(), 3);
        assert_eq!(config.policies[1].label(), "NCATS");
        assert_eq!(config.policies[0].alpha(), 0.25);
        assert_eq!(config.mean_scale, MeanScale::PaperLiteral);
        assert_eq!(
            config.policies[1].budget_specs(),
            vec![BudgetSpec::Fraction(0.25)]
        );
        let again = ExperimentConfig::from_toml_str(&config.to_toml_string()).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            EXAMPLE.replace("trials = 3", "trials = 0"),
            EXAMPLE.replace("horizon = 100", "horizon = 0"),
            EXAMPLE.replace("label = \"NCATS\"", "label = \"CATS\""),
            EXAMPLE.replace("stop_fraction = 0.3", ""),
            EXAMPLE.replace("gamma = 0.99", "gamma = 0.0"),
            EXAMPLE.replace("budgets = [2]", ""),
            EXAMPLE.replace("seed = 7", "seed = 7\nunknown_key = 1"),
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml_str(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn fraction_budgets_floor_and_cap() {
        assert_eq!(BudgetSpec::Fraction(0.2).resolve(93, 84), 18);
        assert_eq!(BudgetSpec::Fraction(0.4).resolve(93, 84), 37);
        assert_eq!(BudgetSpec::Fraction(0.6).resolve(93, 84), 55);
        assert_eq!(BudgetSpec::Fraction(1.0).resolve(93, 84), 84);
        assert_eq!(BudgetSpec::Fraction(0.4).label(), "0.4");
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../../configs/synthetic.toml"),
            include_str!("../../../../configs/warfarin-nonstationary.toml"),
        ] {
            ExperimentConfig::from_toml_str(text).unwrap();
        }
    }
}
