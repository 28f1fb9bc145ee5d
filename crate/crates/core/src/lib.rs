//! Context-attentive bandits: policies that first decide which extra context
//! columns to pay for, given a few free ones, and then pick an arm.
//!
//! The crate provides the Gaussian linear model shared by all learners
//! ([`linear_model`]), the policy family ([`policies`]), synthetic and
//! dataset-replay environments ([`environments`]) and a seeded multi-trial
//! evaluation harness ([`harness`]).

pub mod context;
pub mod environments;
pub mod error;
pub mod harness;
pub mod linear_model;
pub mod policies;

pub use context::ObservedContext;
pub use error::{CabError, Result};
pub use linear_model::{FactorUpdate, GaussianLinearModel, MeanScale, ModelOptions};
pub use policies::{CabPolicy, DecaySchedule, FeatureLayout, FeatureRequest, PolicyParams, Variant};
