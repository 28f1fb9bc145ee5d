use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cab_core::{FactorUpdate, GaussianLinearModel, MeanScale, ModelOptions};

fn stream(seed: u64, d: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (x, rng.random_range(-1.0..1.0))
        })
        .collect()
}

fn model(d: usize, mean_scale: MeanScale, factor_update: FactorUpdate) -> GaussianLinearModel {
    GaussianLinearModel::with_options(
        d,
        ModelOptions {
            mean_scale,
            factor_update,
        },
    )
    .unwrap()
}

#[test]
fn rank_one_factor_tracks_recompute_over_long_decayed_runs() {
    let d = 9;
    let mut fast = model(d, MeanScale::Standard, FactorUpdate::RankOne);
    let mut slow = model(d, MeanScale::Standard, FactorUpdate::Recompute);
    for (x, r) in stream(5, d, 10_000) {
        fast.update(&x, r, 0.995).unwrap();
        slow.update(&x, r, 0.995).unwrap();
    }
    let gap = (fast.factor() - slow.factor()).amax();
    assert!(gap < 1e-9, "factor gap {gap:e}");
    assert!((fast.mean() - slow.mean()).amax() < 1e-9);
    let rebuilt = fast.recompute_factor().unwrap();
    assert!((fast.factor() - rebuilt).amax() < 1e-9);
}

/// Discounted statistics computed directly from the definition.
fn discounted_oracle(data: &[(Vec<f64>, f64)], d: usize, decay: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::<f64>::identity(d, d);
    let mut z = DVector::<f64>::zeros(d);
    for (x, r) in data {
        let x = DVector::from_column_slice(x);
        a = a * decay + &x * x.transpose();
        z = z * decay + &x * *r;
    }
    (a, z)
}

#[test]
fn standard_mean_solves_the_discounted_system() {
    let d = 6;
    let data = stream(6, d, 2_000);
    let mut m = model(d, MeanScale::Standard, FactorUpdate::RankOne);
    for (x, r) in &data {
        m.update(x, *r, 0.99).unwrap();
    }
    let (a, z) = discounted_oracle(&data, d, 0.99);
    assert!((m.precision() - &a).amax() < 1e-9);
    let expected = a.lu().solve(&z).unwrap();
    assert!((m.mean() - expected).amax() < 1e-9);
}

#[test]
fn literal_mean_scales_undecayed_response_by_last_decay() {
    let d = 4;
    let data = stream(7, d, 500);
    let mut m = model(d, MeanScale::PaperLiteral, FactorUpdate::RankOne);
    for (x, r) in &data {
        m.update(x, *r, 0.98).unwrap();
    }
    let (a, _) = discounted_oracle(&data, d, 0.98);
    let z = data
        .iter()
        .fold(DVector::<f64>::zeros(d), |z, (x, r)| z + DVector::from_column_slice(x) * *r);
    let expected = a.lu().solve(&z).unwrap() * 0.98;
    assert!((m.mean() - expected).amax() < 1e-9);
}

#[test]
fn modes_agree_without_decay() {
    let d = 5;
    let mut literal = model(d, MeanScale::PaperLiteral, FactorUpdate::RankOne);
    let mut standard = model(d, MeanScale::Standard, FactorUpdate::RankOne);
    for (x, r) in stream(8, d, 3_000) {
        literal.update(&x, r, 1.0).unwrap();
        standard.update(&x, r, 1.0).unwrap();
    }
    for (a, b) in literal.mean().iter().zip(standard.mean().iter()) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn ucb_width_matches_quadratic_form() {
    let d = 4;
    let mut m = model(d, MeanScale::Standard, FactorUpdate::RankOne);
    for (x, r) in stream(9, d, 50) {
        m.update(&x, r, 1.0).unwrap();
    }
    let x = [0.3, -0.2, 0.5, 1.0];
    let xv = DVector::from_column_slice(&x);
    let inv = m.precision().clone().try_inverse().unwrap();
    let width = (xv.transpose() * inv * &xv)[(0, 0)].sqrt();
    assert_relative_eq!(m.ucb_score(&x, 0.7), m.predict(&x) + 0.7 * width, epsilon = 1e-12);
}
