//! Realized stock and harvest value when the truth is managed by fixed policies.
//!
//! Every regime sees the same shock stream for a given replicate, so paired
//! differences isolate the effect of the policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::StochasticModel;
use crate::mdp::{ActionGrid, Policy, RewardSpec, StateGrid};
use crate::rng::{replicate_rng, stream_seed};
use crate::scoring::CampaignSpec;
use crate::stats::{self, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManagedStep {
    pub t: usize,
    pub state: f64,
    pub quota: f64,
    pub harvest: f64,
    pub reward: f64,
    pub next_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagedRun {
    pub model: String,
    pub replicate: usize,
    pub steps: Vec<ManagedStep>,
    pub npv: f64,
    /// Mean of the end-of-season stocks.
    pub mean_stock: f64,
}

/// Discounted sum of per-season rewards, first season undiscounted.
pub fn discounted_sum(rewards: impl IntoIterator<Item = f64>, delta: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= delta;
    }
    total
}

/// Run the truth under `policy` for `horizon` seasons from `x0`.
pub fn simulate_policy(
    truth: &StochasticModel,
    label: &str,
    policy: &Policy,
    states: &StateGrid,
    actions: &ActionGrid,
    reward: &RewardSpec,
    spec: &CampaignSpec,
    replicate: usize,
) -> Result<ManagedRun> {
    if policy.0.len() != states.len() {
        return Err(Error::Validation(format!("policy for `{label}` does not match the state grid")));
    }
    let mut rng = replicate_rng(spec.seed, replicate as u64);
    let mut x = spec.x0;
    let mut steps = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let quota = policy.quota(states.bin_of(x), actions);
        let out = truth.step(x, quota, &mut rng)?;
        steps.push(ManagedStep { t, state: x, quota, harvest: out.harvest, reward: reward.price * out.harvest, next_state: out.next });
        x = out.next;
    }
    let npv = discounted_sum(steps.iter().map(|s| s.reward), reward.delta);
    let mean_stock = stats::mean(&steps.iter().map(|s| s.next_state).collect::<Vec<_>>());
    Ok(ManagedRun { model: label.to_string(), replicate, steps, npv, mean_stock })
}

/// Every regime on every replicate, ordered by replicate then regime.
pub fn managed_runs(
    truth: &StochasticModel,
    regimes: &[(String, Policy)],
    states: &StateGrid,
    actions: &ActionGrid,
    reward: &RewardSpec,
    spec: &CampaignSpec,
) -> Result<Vec<ManagedRun>> {
    reward.validate()?;
    if spec.reps == 0 {
        return Err(Error::config("reps", "must be >= 1"));
    }
    if spec.horizon == 0 {
        return Err(Error::config("horizon", "must be >= 1"));
    }
    let per_rep: Vec<Result<Vec<ManagedRun>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            regimes
                .iter()
                .map(|(label, p)| simulate_policy(truth, label, p, states, actions, reward, spec, rep))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(spec.reps * regimes.len());
    for r in per_rep {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub model: String,
    pub mean_stock: f64,
    pub npv: f64,
    pub replicates: usize,
}

/// Per-regime means, in first-appearance order.
pub fn summarize_regimes(runs: &[ManagedRun]) -> Vec<RegimeSummary> {
    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.model.as_str()) {
            labels.push(&r.model);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let mine: Vec<&ManagedRun> = runs.iter().filter(|r| r.model == label).collect();
            RegimeSummary {
                model: label.to_string(),
                mean_stock: stats::mean(&mine.iter().map(|r| r.mean_stock).collect::<Vec<_>>()),
                npv: stats::mean(&mine.iter().map(|r| r.npv).collect::<Vec<_>>()),
                replicates: mine.len(),
            }
        })
        .collect()
}

/// Paired differences `a - b` over matched replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeComparison {
    pub a: String,
    pub b: String,
    pub stock_difference: f64,
    pub stock_ci: Interval,
    pub npv_difference: f64,
    pub npv_ci: Interval,
}

pub fn compare_regimes(runs: &[ManagedRun], a: &str, b: &str, seed: u64) -> Result<RegimeComparison> {
    let pick = |label: &str| -> Vec<&ManagedRun> { runs.iter().filter(|r| r.model == label).collect() };
    let (ra, rb) = (pick(a), pick(b));
    if ra.is_empty() || ra.len() != rb.len() || ra.iter().zip(&rb).any(|(x, y)| x.replicate != y.replicate) {
        return Err(Error::Validation(format!("`{a}` and `{b}` need the same nonempty replicate set")));
    }
    let stock: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x.mean_stock - y.mean_stock).collect();
    let npv: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x.npv - y.npv).collect();
    let level = 0.95;
    Ok(RegimeComparison {
        a: a.to_string(),
        b: b.to_string(),
        stock_difference: stats::mean(&stock),
        stock_ci: stats::bootstrap_mean_ci(&stock, level, stats::BOOTSTRAP_RESAMPLES, stream_seed(seed, "stock")),
        npv_difference: stats::mean(&npv),
        npv_ci: stats::bootstrap_mean_ci(&npv, level, stats::BOOTSTRAP_RESAMPLES, stream_seed(seed, "npv")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::GrowthCurve;
    use crate::mdp::{discretize_kernel, value_iterate, SolveOptions};

    fn setup() -> (StochasticModel, StateGrid, ActionGrid) {
        let m = StochasticModel::new(GrowthCurve::gordon_schaefer("gs", 0.8, 1.0).unwrap(), 0.05).unwrap();
        (m, StateGrid::uniform(41, 1.5).unwrap(), ActionGrid::uniform(21, 0.8).unwrap())
    }

    #[test]
    fn discounted_sum_by_hand() {
        assert_eq!(discounted_sum([1.0, 2.0, 4.0], 0.5), 1.0 + 1.0 + 1.0);
        assert_eq!(discounted_sum(std::iter::empty(), 0.9), 0.0);
    }

    #[test]
    fn zero_policy_never_harvests() {
        let (m, s, a) = setup();
        let spec = CampaignSpec { reps: 3, horizon: 20, x0: 0.5, seed: 1 };
        let runs = managed_runs(&m, &[("none".into(), Policy(vec![0; s.len()]))], &s, &a, &RewardSpec::default(), &spec).unwrap();
        assert_eq!(runs.len(), 3);
        assert!(runs.iter().all(|r| r.npv == 0.0 && r.steps.iter().all(|st| st.harvest == 0.0)));
    }

    #[test]
    fn identical_policies_give_identical_runs() {
        let (m, s, a) = setup();
        let k = discretize_kernel(&m, &s, &a).unwrap();
        let sol = value_iterate(&k, &RewardSpec::default(), &s, &a, &SolveOptions::default()).unwrap();
        let spec = CampaignSpec { reps: 4, horizon: 30, x0: 1.0, seed: 9 };
        let regimes = vec![("a".to_string(), sol.policy.clone()), ("b".to_string(), sol.policy)];
        let runs = managed_runs(&m, &regimes, &s, &a, &RewardSpec::default(), &spec).unwrap();
        let c = compare_regimes(&runs, "a", "b", 3).unwrap();
        assert_eq!(c.npv_difference, 0.0);
        assert_eq!(c.stock_difference, 0.0);
        assert_eq!((c.npv_ci.low, c.npv_ci.high), (0.0, 0.0));
    }

    #[test]
    fn npv_matches_rewards() {
        let (m, s, a) = setup();
        let spec = CampaignSpec { reps: 1, horizon: 15, x0: 1.0, seed: 2 };
        let pol = Policy(vec![5; s.len()]);
        let run = simulate_policy(&m, "p", &pol, &s, &a, &RewardSpec { price: 2.0, delta: 0.9 }, &spec, 0).unwrap();
        let want: f64 = run.steps.iter().map(|st| 0.9f64.powi(st.t as i32) * 2.0 * st.harvest).sum();
        assert!((run.npv - want).abs() < 1e-12);
        assert!(run.steps.windows(2).all(|w| w[0].next_state == w[1].state));
    }

    #[test]
    fn mismatched_regimes_are_rejected() {
        let (m, s, a) = setup();
        let spec = CampaignSpec { reps: 2, horizon: 5, x0: 1.0, seed: 2 };
        let runs = managed_runs(&m, &[("a".into(), Policy(vec![0; s.len()]))], &s, &a, &RewardSpec::default(), &spec).unwrap();
        assert!(compare_regimes(&runs, "a", "zzz", 0).is_err());
        assert!(simulate_policy(&m, "short", &Policy(vec![0; 3]), &s, &a, &RewardSpec::default(), &spec, 0).is_err());
    }
}
