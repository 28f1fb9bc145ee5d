use super::{argmax, top_k};
use crate::context::ObservedContext;
use crate::environments::SyntheticTruth;
use crate::error::{CabError, Result};

/// Best action under the true parameters: the `budget` columns with the largest
/// `c^Vᵀθᵢ`, then the arm maximizing the expected reward on the resulting context.
///
/// Returns the chosen columns (ascending) and the arm. Ties go to lower indices.
pub fn oracle_action(
    truth: &SyntheticTruth,
    known: &ObservedContext,
    full: &[f64],
    budget: usize,
) -> Result<(Vec<usize>, usize)> {
    let selectable = truth.selectable();
    if budget > selectable.len() {
        return Err(CabError::Config(format!(
            "budget {budget} exceeds {} selectable features",
            selectable.len()
        )));
    }
    let scores: Vec<f64> = selectable
        .iter()
        .map(|&i| truth.feature_value(known, i))
        .collect();
    let chosen: Vec<usize> = top_k(&scores, budget).into_iter().map(|j| selectable[j]).collect();

    let mut observed = truth.known_set.clone();
    observed.extend_from_slice(&chosen);
    let ctx = ObservedContext::from_full(full, &observed)?;
    let rewards: Vec<f64> = (0..truth.arm_weights.len())
        .map(|k| truth.expected_reward(&ctx, k))
        .collect();
    Ok((chosen, argmax(&rewards)))
}
