//! Incremental Bayesian ridge regression with Gaussian posterior sampling.
//!
//! One [`GaussianLinearModel`] backs every arm model and every feature-relevance
//! model. The precision matrix starts at the identity and only ever receives a
//! positive decay factor plus rank-1 PSD terms, so it stays SPD. Solves go
//! through a lower Cholesky factor; no inverse is ever stored.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CabError, Result};

/// How the posterior mean relates to the response vector under decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanScale {
    /// `precision ← λ·precision + xxᵀ`, `response ← response + x·r`,
    /// `mean = λ·precision⁻¹·response`. The response is never decayed.
    #[default]
    PaperLiteral,
    /// Discounted ridge: `response ← λ·response + x·r`, `mean = precision⁻¹·response`.
    Standard,
}

/// How the Cholesky factor is maintained after an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorUpdate {
    /// Full O(d³) refactorization of the precision matrix on every update.
    Recompute,
    /// O(d²) rank-1 update of the existing factor.
    #[default]
    RankOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    #[serde(default)]
    pub mean_scale: MeanScale,
    #[serde(default)]
    pub factor_update: FactorUpdate,
}

#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    precision: DMatrix<f64>,
    /// Lower Cholesky factor of `precision`.
    factor: DMatrix<f64>,
    response: DVector<f64>,
    mean: DVector<f64>,
    options: ModelOptions,
}

impl GaussianLinearModel {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_options(dim, ModelOptions::default())
    }

    pub fn with_options(dim: usize, options: ModelOptions) -> Result<Self> {
        if dim == 0 {
            return Err(CabError::InvalidDimension(
                "model dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            precision: DMatrix::identity(dim, dim),
            factor: DMatrix::identity(dim, dim),
            response: DVector::zeros(dim),
            mean: DVector::zeros(dim),
            options,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Lower Cholesky factor currently cached for the precision matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Absorbs one observation `(x, r)` after discounting the precision by `decay`.
    ///
    /// On error the model is left untouched.
    pub fn update(&mut self, x: &[f64], reward: f64, decay: f64) -> Result<()> {
        self.check_input(x)?;
        if !reward.is_finite() {
            return Err(CabError::NonFinite("reward"));
        }
        if !(decay.is_finite() && decay > 0.0 && decay <= 1.0) {
            return Err(CabError::Config(format!(
                "decay must lie in (0, 1], got {decay}"
            )));
        }
        let x = DVector::from_column_slice(x);

        let mut precision = self.precision.clone();
        if decay != 1.0 {
            precision *= decay;
        }
        precision.ger(1.0, &x, &x, 1.0);

        let factor = match self.options.factor_update {
            FactorUpdate::Recompute => cholesky_factor(&precision)?,
            FactorUpdate::RankOne => {
                let mut factor = self.factor.clone();
                if decay != 1.0 {
                    factor *= decay.sqrt();
                }
                rank_one_update(&mut factor, x.as_slice(), 1.0)?;
                factor
            }
        };

        let mut response = self.response.clone();
        if decay != 1.0 && self.options.mean_scale == MeanScale::Standard {
            response *= decay;
        }
        response.axpy(reward, &x, 1.0);

        let scale = match self.options.mean_scale {
            MeanScale::PaperLiteral => decay,
            MeanScale::Standard => 1.0,
        };
        self.mean = solve_with_factor(&factor, &response) * scale;
        self.precision = precision;
        self.factor = factor;
        self.response = response;
        Ok(())
    }

    /// Removes a previously absorbed observation (undecayed models only).
    ///
    /// Used by sliding-window policies to evict old events. The factor is
    /// downdated in place when possible and refactorized otherwise.
    pub fn downdate(&mut self, x: &[f64], reward: f64) -> Result<()> {
        self.check_input(x)?;
        if !reward.is_finite() {
            return Err(CabError::NonFinite("reward"));
        }
        let x = DVector::from_column_slice(x);
        let mut precision = self.precision.clone();
        precision.ger(-1.0, &x, &x, 1.0);

        let factor = match self.options.factor_update {
            FactorUpdate::Recompute => cholesky_factor(&precision)?,
            FactorUpdate::RankOne => {
                let mut factor = self.factor.clone();
                match rank_one_update(&mut factor, x.as_slice(), -1.0) {
                    Ok(()) => factor,
                    Err(_) => cholesky_factor(&precision)?,
                }
            }
        };
        let mut response = self.response.clone();
        response.axpy(-reward, &x, 1.0);

        self.mean = solve_with_factor(&factor, &response);
        self.precision = precision;
        self.factor = factor;
        self.response = response;
        Ok(())
    }

    /// Draws `mean + α·L⁻ᵀu` with `u ~ N(0, I)`, i.e. a sample of `N(mean, α²·precision⁻¹)`.
    pub fn sample_weights<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> DVector<f64> {
        if alpha == 0.0 {
            return self.mean.clone();
        }
        let dim = self.dim();
        let noise = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let offset = self
            .factor
            .tr_solve_lower_triangular(&noise)
            .expect("cholesky factor has a positive diagonal");
        &self.mean + offset * alpha
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(x, self.mean.as_slice())
    }

    /// LinUCB-style optimistic score `xᵀmean + α·sqrt(xᵀ·precision⁻¹·x)`.
    pub fn ucb_score(&self, x: &[f64], alpha: f64) -> f64 {
        let mean = self.predict(x);
        if alpha == 0.0 {
            return mean;
        }
        mean + alpha * self.variance_along(x).sqrt()
    }

    /// `xᵀ·precision⁻¹·x`, the posterior variance along `x` at unit scale.
    pub fn variance_along(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let w = self
            .factor
            .solve_lower_triangular(&v)
            .expect("cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// Cholesky factor of the current precision computed from scratch.
    pub fn recompute_factor(&self) -> Result<DMatrix<f64>> {
        cholesky_factor(&self.precision)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CabError::InvalidDimension(format!(
                "expected vector of length {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CabError::NonFinite("context vector"));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cholesky_factor(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    matrix
        .clone()
        .cholesky()
        .map(|c| c.unpack())
        .ok_or(CabError::NotPositiveDefinite("cholesky factorization failed"))
}

fn solve_with_factor(factor: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let y = factor
        .solve_lower_triangular(rhs)
        .expect("cholesky factor has a positive diagonal");
    factor
        .tr_solve_lower_triangular(&y)
        .expect("cholesky factor has a positive diagonal")
}

/// In-place update of a lower factor `L` so that `LLᵀ` becomes `LLᵀ + sign·xxᵀ`.
fn rank_one_update(factor: &mut DMatrix<f64>, x: &[f64], sign: f64) -> Result<()> {
    let n = x.len();
    let mut work = x.to_vec();
    for k in 0..n {
        let lkk = factor[(k, k)];
        let squared = lkk * lkk + sign * work[k] * work[k];
        if squared.is_nan() || squared <= 0.0 {
            return Err(CabError::NotPositiveDefinite("rank-1 downdate lost definiteness"));
        }
        let r = squared.sqrt();
        let c = r / lkk;
        let s = work[k] / lkk;
        factor[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (factor[(i, k)] + sign * s * work[i]) / c;
            factor[(i, k)] = lik;
            work[i] = c * work[i] - s * lik;
        }
    }
    Ok(())
}
