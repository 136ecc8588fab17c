//! The shipped single-species configuration.
//!
//! * `truth`: a right-skewed curve whose net growth peaks above `K/2`.
//! * `model1`: the Gordon-Schaefer curve sharing the truth's net-growth peak
//!   and its discounted escapement, but a poor fit elsewhere.
//! * `model2`: the Gordon-Schaefer curve closest to the truth in sup norm on
//!   `[0, 1.2K]`; a better forecaster whose escapement is too low.

use crate::adaptive::Belief;
use crate::error::Result;
use crate::growth::{fit_gordon_schaefer_sup_norm, gordon_schaefer_ensemble, GrowthCurve, ModelEnsemble, StochasticModel, SupNormFit};
use crate::mdp::{peak_net_growth, reed_escapement, ActionGrid, RewardSpec, StateGrid};

pub const TRUTH_R: f64 = 1.2;
pub const TRUTH_K: f64 = 1.0;
pub const TRUTH_C: f64 = 0.25;
pub const SIGMA: f64 = 0.05;
pub const DELTA: f64 = 0.99;
pub const X0: f64 = 1.0;

/// [`fit_model2`] applied to the truth.
pub const MODEL2_R: f64 = 1.095;
pub const MODEL2_K: f64 = 0.985;

/// Largest carrying capacity among shipped models; sets the grids.
pub const K_MAX: f64 = 1.6;

pub const ENSEMBLE_R: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const ENSEMBLE_K: [f64; 7] = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
pub const PRIOR_MASS: f64 = 0.99;

pub fn truth_curve() -> GrowthCurve {
    GrowthCurve::skewed_true("truth", TRUTH_R, TRUTH_K, TRUTH_C).expect("reference truth is valid")
}

pub fn truth() -> StochasticModel {
    StochasticModel::new(truth_curve(), SIGMA).expect("reference truth is valid")
}

/// `(r, K)` of model 1: `K` puts the peak where the truth's is, `r` makes
/// the discounted escapement `K/2 (1 - (1/delta - 1)/r)` match the truth's.
pub fn model1_parameters(truth: &GrowthCurve, delta: f64) -> Result<(f64, f64)> {
    let peak = peak_net_growth(truth);
    let target = reed_escapement(truth, delta)?;
    let r = (1.0 / delta - 1.0) / (1.0 - target / peak);
    Ok((r, 2.0 * peak))
}

pub fn model1() -> StochasticModel {
    let (r, k) = model1_parameters(&truth_curve(), DELTA).expect("reference truth has an escapement");
    StochasticModel::new(GrowthCurve::gordon_schaefer("model1", r, k).expect("model 1 is valid"), SIGMA)
        .expect("model 1 is valid")
}

/// Sup-norm Gordon-Schaefer fit to `truth` on `[0, 1.2 s]` (241 points), with
/// `r` on `0.05..=2.5` step 0.005 and `K / s` on `0.5..=1.5` step 0.0025, where
/// `s` is the truth's scale.
pub fn fit_model2(truth: &GrowthCurve) -> SupNormFit {
    let s = truth.scale();
    fit_gordon_schaefer_sup_norm(truth, (0.05, 2.5, 0.005), (0.5 * s, 1.5 * s, 0.0025 * s), 1.2 * s, 241)
}

pub fn model2() -> StochasticModel {
    StochasticModel::new(GrowthCurve::gordon_schaefer("model2", MODEL2_R, MODEL2_K).expect("model 2 is valid"), SIGMA)
        .expect("model 2 is valid")
}

/// model1, model2, truth.
pub fn zoo() -> ModelEnsemble {
    ModelEnsemble::new(vec![model1(), model2(), truth()]).expect("zoo labels are unique")
}

pub fn two_model_ensemble() -> ModelEnsemble {
    ModelEnsemble::new(vec![model1(), model2()]).expect("labels are unique")
}

/// The 6 x 7 Gordon-Schaefer grid with its member nearest to model 1 (in
/// relative `(r, K)` distance) replaced by model 1 itself.
pub fn forty_two_model_ensemble() -> ModelEnsemble {
    let mut ens = gordon_schaefer_ensemble(&ENSEMBLE_R, &ENSEMBLE_K, SIGMA).expect("grid is valid");
    let (r1, k1) = model1_parameters(&truth_curve(), DELTA).expect("reference truth has an escapement");
    let nearest = nearest_member(&ENSEMBLE_R, &ENSEMBLE_K, r1, k1);
    ens.replace(nearest, model1()).expect("model1 label is unique in the grid");
    ens
}

/// Row-major index of the grid pair closest to `(r, k)` in relative distance.
pub fn nearest_member(r_values: &[f64], k_values: &[f64], r: f64, k: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, &ri) in r_values.iter().enumerate() {
        for (j, &kj) in k_values.iter().enumerate() {
            let d = ((ri - r) / r).powi(2) + ((kj - k) / k).powi(2);
            if d < best.1 {
                best = (i * k_values.len() + j, d);
            }
        }
    }
    best.0
}

/// `PRIOR_MASS` on the member labelled `model1`, the rest uniform.
pub fn model1_prior(ensemble: &ModelEnsemble) -> Result<Belief> {
    let i = ensemble
        .index_of("model1")
        .ok_or_else(|| crate::Error::Validation("ensemble has no `model1` member".into()))?;
    Belief::concentrated(ensemble.len(), i, PRIOR_MASS)
}

/// 121 points on `[0, 1.5 K_MAX]`.
pub fn state_grid() -> StateGrid {
    StateGrid::uniform(121, 1.5 * K_MAX).expect("reference grid is valid")
}

/// 101 quotas on `[0, 0.8 K_MAX]`.
pub fn action_grid() -> ActionGrid {
    ActionGrid::uniform(101, 0.8 * K_MAX).expect("reference grid is valid")
}

pub fn reward() -> RewardSpec {
    RewardSpec { price: 1.0, delta: DELTA }
}
