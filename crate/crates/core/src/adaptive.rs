//! Adaptive management over a model ensemble.
//!
//! Each season the manager plans against the belief-weighted mixture of the
//! members' kernels, applies the resulting quota to the true stock, and (in
//! learning mode) reweights the members by how well they forecast the new
//! observation. [`value_of_information`] compares learning against keeping the
//! prior fixed, on common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{ModelEnsemble, StochasticModel};
use crate::mdp::{
    discretize_kernel, policy_iterate, ActionGrid, Policy, RewardSpec, RewardTable, Solution, StateGrid,
    TransitionKernel,
};
use crate::rng::{replicate_rng, stream_seed};
use crate::scoring::one_step_forecast;
use crate::stats::{self, Interval};

/// Improvement steps allowed per re-plan.
const POLICY_ITERATION_LIMIT: usize = 500;

/// Members lighter than this fraction of the heaviest are left out of the
/// planning mixture; their share of any expected value is below the solver's
/// tie tolerance.
pub const PLANNING_WEIGHT_FLOOR: f64 = 1e-12;

/// Posterior weights over ensemble members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    /// Normalizes `weights`; they must be finite, nonnegative, and not all zero.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation("belief weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("belief weights sum to zero".into()));
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    /// `mass` on member `index`, the rest spread evenly over the others.
    pub fn concentrated(n: usize, index: usize, mass: f64) -> Result<Self> {
        if index >= n || !(0.0..=1.0).contains(&mass) {
            return Err(Error::Validation(format!("bad concentrated prior (n={n}, index={index}, mass={mass})")));
        }
        if n == 1 {
            return Self::new(vec![1.0]);
        }
        let rest = (1.0 - mass) / (n - 1) as f64;
        Self::new((0..n).map(|i| if i == index { mass } else { rest }).collect())
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        Self::concentrated(n, index, 1.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the heaviest member (first on ties).
    pub fn top(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefUpdate {
    pub belief: Belief,
    /// Every member gave the observation zero probability; the prior was kept.
    pub degenerate: bool,
}

/// Bayes rule in log space from per-member likelihoods.
pub fn update_with_likelihoods(belief: &Belief, likelihoods: &[f64]) -> Result<BeliefUpdate> {
    if likelihoods.len() != belief.len() {
        return Err(Error::Validation("one likelihood per member required".into()));
    }
    let log_post: Vec<f64> = belief
        .weights
        .iter()
        .zip(likelihoods)
        .map(|(&w, &l)| if w > 0.0 && l > 0.0 { w.ln() + l.ln() } else { f64::NEG_INFINITY })
        .collect();
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(BeliefUpdate { belief: belief.clone(), degenerate: true });
    }
    let raw: Vec<f64> = log_post.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(BeliefUpdate { belief: Belief { weights: raw.into_iter().map(|w| w / total).collect() }, degenerate: false })
}

/// Reweight `belief` by each member's forecast probability of the bin containing `x_obs`.
pub fn update_belief(
    belief: &Belief,
    ensemble: &ModelEnsemble,
    x_prev: f64,
    quota: f64,
    x_obs: f64,
    states: &StateGrid,
) -> Result<BeliefUpdate> {
    if belief.len() != ensemble.len() {
        return Err(Error::Validation("belief and ensemble sizes differ".into()));
    }
    let bin = states.bin_of(x_obs);
    let likelihoods = ensemble
        .iter()
        .map(|m| Ok(one_step_forecast(m, x_prev, quota, states)?.probabilities[bin]))
        .collect::<Result<Vec<f64>>>()?;
    update_with_likelihoods(belief, &likelihoods)
}

/// Ensemble members discretized once on shared grids, ready for re-planning.
#[derive(Debug, Clone)]
pub struct EnsembleKernels {
    ensemble: ModelEnsemble,
    states: StateGrid,
    actions: ActionGrid,
    kernels: Vec<TransitionKernel>,
}

impl EnsembleKernels {
    pub fn build(ensemble: &ModelEnsemble, states: &StateGrid, actions: &ActionGrid) -> Result<Self> {
        let kernels = ensemble
            .iter()
            .map(|m| discretize_kernel(m, states, actions))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ensemble: ensemble.clone(), states: states.clone(), actions: actions.clone(), kernels })
    }

    pub fn ensemble(&self) -> &ModelEnsemble {
        &self.ensemble
    }

    pub fn states(&self) -> &StateGrid {
        &self.states
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn kernels(&self) -> &[TransitionKernel] {
        &self.kernels
    }
}

/// `sum_i w_i K_i`, skipping members with zero weight.
pub fn mixture_kernel(kernels: &EnsembleKernels, belief: &Belief) -> Result<TransitionKernel> {
    if belief.len() != kernels.kernels.len() {
        return Err(Error::Validation("belief and ensemble sizes differ".into()));
    }
    let refs: Vec<&TransitionKernel> = kernels.kernels.iter().collect();
    TransitionKernel::mixture(&refs, belief.weights())
}

/// Certainty-equivalent plan: the optimal policy for the belief-averaged kernel.
///
/// Solved by policy iteration, optionally warm-started from `warm_start`.
/// Members below [`PLANNING_WEIGHT_FLOOR`] of the top weight are dropped and
/// the rest renormalized before mixing.
pub fn plan_with_belief(
    kernels: &EnsembleKernels,
    belief: &Belief,
    reward: &RewardSpec,
    warm_start: Option<&Policy>,
) -> Result<Solution> {
    reward.validate()?;
    let top = belief.weights[belief.top()];
    let pruned = Belief::new(
        belief.weights.iter().map(|&w| if w < PLANNING_WEIGHT_FLOOR * top { 0.0 } else { w }).collect(),
    )?;
    let mix = mixture_kernel(kernels, &pruned)?;
    let rewards = RewardTable::harvest(reward, &kernels.states, &kernels.actions);
    policy_iterate(&mix, &rewards, reward.delta, POLICY_ITERATION_LIMIT, warm_start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveMode {
    /// Update the belief after every observation and re-plan.
    Learning,
    /// Keep the prior and its policy for the whole run.
    Planning,
}

impl AdaptiveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdaptiveMode::Learning => "learning",
            AdaptiveMode::Planning => "planning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStep {
    pub t: usize,
    pub state: f64,
    pub quota: f64,
    pub harvest: f64,
    pub reward: f64,
    /// Belief after this season's observation (the prior, in planning mode).
    pub belief: Vec<f64>,
    /// Each member's probability of the observed bin.
    pub likelihoods: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRun {
    pub mode: AdaptiveMode,
    pub replicate: usize,
    pub steps: Vec<AdaptiveStep>,
    /// Discounted sum of rewards.
    pub npv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSpec {
    pub horizon: usize,
    pub x0: f64,
    pub seed: u64,
}

/// One replicate of adaptive management against `truth`.
///
/// `prior_plan` is the policy for `prior`; pass it in when running many
/// replicates so it is solved once. The shock stream is
/// `replicate_rng(spec.seed, replicate)`, one draw per season, so learning
/// and planning runs of the same replicate share their noise.
pub fn run_adaptive(
    truth: &StochasticModel,
    kernels: &EnsembleKernels,
    prior: &Belief,
    prior_plan: Option<&Policy>,
    mode: AdaptiveMode,
    reward: &RewardSpec,
    spec: &AdaptiveSpec,
    replicate: usize,
) -> Result<AdaptiveRun> {
    if spec.horizon == 0 {
        return Err(Error::config("horizon", "must be >= 1"));
    }
    if prior.len() != kernels.kernels.len() {
        return Err(Error::Validation("prior and ensemble sizes differ".into()));
    }
    let (states, actions) = (&kernels.states, &kernels.actions);
    let mut policy = match prior_plan {
        Some(p) => p.clone(),
        None => plan_with_belief(kernels, prior, reward, None)?.policy,
    };
    let mut belief = prior.clone();
    let mut rng = replicate_rng(spec.seed, replicate as u64);
    let mut x = spec.x0;
    let mut npv = 0.0;
    let mut discount = 1.0;
    let mut steps = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let xi = states.bin_of(x);
        let ai = policy.0[xi];
        let quota = actions.values()[ai];
        let out = truth.step(x, quota, &mut rng)?;
        let r = reward.price * out.harvest;
        npv += discount * r;
        discount *= reward.delta;
        // Kernel rows are the members' forecasts from the snapped state.
        let obs_bin = states.bin_of(out.next);
        let likelihoods: Vec<f64> = kernels.kernels.iter().map(|k| k.row(ai, xi)[obs_bin]).collect();
        let mut degenerate = false;
        if mode == AdaptiveMode::Learning {
            let upd = update_with_likelihoods(&belief, &likelihoods)?;
            degenerate = upd.degenerate;
            if upd.belief != belief && t + 1 < spec.horizon {
                policy = plan_with_belief(kernels, &upd.belief, reward, Some(&policy))?.policy;
            }
            belief = upd.belief;
        }
        steps.push(AdaptiveStep {
            t,
            state: x,
            quota,
            harvest: out.harvest,
            reward: r,
            belief: belief.weights.clone(),
            likelihoods,
            degenerate,
        });
        x = out.next;
    }
    Ok(AdaptiveRun { mode, replicate, steps, npv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiReport {
    pub voi: f64,
    pub relative_voi: f64,
    pub ci: Interval,
    pub relative_ci: Interval,
    pub npv_learning: f64,
    pub npv_planning: f64,
    pub reps: usize,
    pub horizon: usize,
}

/// Learning and planning runs for every replicate plus the VOI summary.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiStudy {
    pub report: VoiReport,
    pub learning: Vec<AdaptiveRun>,
    pub planning: Vec<AdaptiveRun>,
}

impl VoiStudy {
    /// Share of learning runs whose belief on `member` exceeds `threshold`
    /// after the first update.
    pub fn first_update_share(&self, member: usize, threshold: f64) -> f64 {
        let hits = self.learning.iter().filter(|r| r.steps[0].belief[member] > threshold).count();
        hits as f64 / self.learning.len() as f64
    }
}

/// VOI summary from paired NPVs: the difference of means, its share of the
/// planning mean, and percentile-bootstrap intervals for both.
pub fn voi_from_npvs(learning: &[f64], planning: &[f64], horizon: usize, seed: u64) -> Result<VoiReport> {
    if learning.len() != planning.len() || learning.len() < 2 {
        return Err(Error::config("reps", "VOI needs at least 2 paired replicates"));
    }
    let (ml, mp) = (stats::mean(learning), stats::mean(planning));
    let voi = ml - mp;
    let diffs: Vec<f64> = learning.iter().zip(planning).map(|(a, b)| a - b).collect();
    let ci = stats::bootstrap_mean_ci(&diffs, 0.95, stats::BOOTSTRAP_RESAMPLES, stream_seed(seed, "voi"));
    let ratio = stats::bootstrap_ratio_ci(learning, planning, 0.95, stats::BOOTSTRAP_RESAMPLES, stream_seed(seed, "voi"));
    Ok(VoiReport {
        voi,
        relative_voi: voi / mp,
        ci,
        relative_ci: Interval { low: ratio.low - 1.0, high: ratio.high - 1.0 },
        npv_learning: ml,
        npv_planning: mp,
        reps: learning.len(),
        horizon,
    })
}

/// Mean NPV with learning minus mean NPV with the prior frozen.
pub fn value_of_information(
    truth: &StochasticModel,
    kernels: &EnsembleKernels,
    prior: &Belief,
    reps: usize,
    reward: &RewardSpec,
    spec: &AdaptiveSpec,
) -> Result<VoiStudy> {
    if reps < 2 {
        return Err(Error::config("reps", "VOI needs at least 2 replicates"));
    }
    let prior_plan = plan_with_belief(kernels, prior, reward, None)?.policy;
    let pairs: Vec<Result<(AdaptiveRun, AdaptiveRun)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let l = run_adaptive(truth, kernels, prior, Some(&prior_plan), AdaptiveMode::Learning, reward, spec, rep)?;
            let p = run_adaptive(truth, kernels, prior, Some(&prior_plan), AdaptiveMode::Planning, reward, spec, rep)?;
            Ok((l, p))
        })
        .collect();
    let mut learning = Vec::with_capacity(reps);
    let mut planning = Vec::with_capacity(reps);
    for p in pairs {
        let (l, q) = p?;
        learning.push(l);
        planning.push(q);
    }
    let nl: Vec<f64> = learning.iter().map(|r| r.npv).collect();
    let np: Vec<f64> = planning.iter().map(|r| r.npv).collect();
    let report = voi_from_npvs(&nl, &np, spec.horizon, spec.seed)?;
    Ok(VoiStudy { report, learning, planning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::GrowthCurve;
    use crate::mdp::{value_iterate, SolveOptions};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn gs(label: &str, r: f64, k: f64) -> StochasticModel {
        StochasticModel::new(GrowthCurve::gordon_schaefer(label, r, k).unwrap(), 0.05).unwrap()
    }

    fn grids() -> (StateGrid, ActionGrid) {
        (StateGrid::uniform(61, 1.8).unwrap(), ActionGrid::uniform(41, 1.0).unwrap())
    }

    #[test]
    fn hand_arithmetic_update() {
        let prior = Belief::new(vec![0.99, 0.01]).unwrap();
        let post = update_with_likelihoods(&prior, &[0.2, 0.8]).unwrap();
        assert!(!post.degenerate);
        assert!((post.belief.weights()[0] - 0.198 / 0.206).abs() < 1e-12);
        assert!((post.belief.weights()[1] - 0.008 / 0.206).abs() < 1e-12);
    }

    #[test]
    fn zero_likelihood_kills_a_member() {
        let prior = Belief::uniform(3).unwrap();
        let post = update_with_likelihoods(&prior, &[0.3, 0.0, 0.1]).unwrap();
        assert_eq!(post.belief.weights()[1], 0.0);
    }

    #[test]
    fn all_zero_likelihoods_keep_the_prior() {
        let prior = Belief::new(vec![0.7, 0.3]).unwrap();
        let post = update_with_likelihoods(&prior, &[0.0, 0.0]).unwrap();
        assert!(post.degenerate);
        assert_eq!(post.belief, prior);
        assert!(post.belief.weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn identical_members_leave_the_prior() {
        let (s, _) = grids();
        let a = gs("a", 0.5, 1.0);
        let b = gs("b", 0.5, 1.0);
        let ens = ModelEnsemble::new(vec![a, b]).unwrap();
        let prior = Belief::new(vec![0.3, 0.7]).unwrap();
        let post = update_belief(&prior, &ens, 0.6, 0.1, 0.7, &s).unwrap();
        for (a, b) in post.belief.weights().iter().zip(prior.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn sequential_updates_equal_joint_update(
            prior in proptest::collection::vec(0.01f64..1.0, 3),
            liks in proptest::collection::vec(proptest::collection::vec(0.001f64..1.0, 3), 1..12),
        ) {
            let prior = Belief::new(prior).unwrap();
            let mut seq = prior.clone();
            for l in &liks {
                seq = update_with_likelihoods(&seq, l).unwrap().belief;
                let total: f64 = seq.weights().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(seq.weights().iter().all(|&w| w >= 0.0));
            }
            let joint: Vec<f64> = (0..3).map(|i| liks.iter().map(|l| l[i]).product()).collect();
            let direct = update_with_likelihoods(&prior, &joint).unwrap().belief;
            for (a, b) in seq.weights().iter().zip(direct.weights()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mixture_matches_direct_summation() {
        let mut rng = rng_from_seed(17);
        let (na, ns) = (3, 5);
        let kernels: Vec<TransitionKernel> = (0..3)
            .map(|_| {
                let mut probs = Vec::new();
                for _ in 0..na * ns {
                    let raw: Vec<f64> = (0..ns).map(|_| rng.random::<f64>()).collect();
                    let t: f64 = raw.iter().sum();
                    probs.extend(raw.iter().map(|p| p / t));
                }
                TransitionKernel::from_dense(na, ns, probs).unwrap()
            })
            .collect();
        let w = Belief::new((0..3).map(|_| rng.random::<f64>()).collect()).unwrap();
        let refs: Vec<&TransitionKernel> = kernels.iter().collect();
        let mix = TransitionKernel::mixture(&refs, w.weights()).unwrap();
        for i in 0..na * ns * ns {
            let direct: f64 = (0..3).map(|m| w.weights()[m] * kernels[m].as_slice()[i]).sum();
            assert!((mix.as_slice()[i] - direct).abs() < 1e-14);
        }
        mix.validate().unwrap();
    }

    #[test]
    fn point_mass_plans_match_single_model_policies() {
        let (s, a) = grids();
        let ens = ModelEnsemble::new(vec![gs("a", 0.6, 1.0), gs("b", 0.3, 1.2)]).unwrap();
        let ek = EnsembleKernels::build(&ens, &s, &a).unwrap();
        let reward = RewardSpec::new(1.0, 0.99).unwrap();
        for i in 0..2 {
            let plan = plan_with_belief(&ek, &Belief::point_mass(2, i).unwrap(), &reward, None).unwrap();
            let direct = value_iterate(&ek.kernels()[i], &reward, &s, &a, &SolveOptions::default()).unwrap();
            assert_eq!(plan.policy, direct.policy);
        }
    }

    #[test]
    fn update_belief_agrees_with_kernel_likelihoods() {
        let (s, a) = grids();
        let ens = ModelEnsemble::new(vec![gs("a", 0.6, 1.0), gs("b", 0.3, 1.2)]).unwrap();
        let ek = EnsembleKernels::build(&ens, &s, &a).unwrap();
        let prior = Belief::new(vec![0.99, 0.01]).unwrap();
        let spec = AdaptiveSpec { horizon: 3, x0: 0.9, seed: 4 };
        let reward = RewardSpec::default();
        let run = run_adaptive(&ens.members()[0], &ek, &prior, None, AdaptiveMode::Learning, &reward, &spec, 0).unwrap();
        let st = &run.steps[0];
        let direct = update_belief(&prior, &ens, st.state, st.quota, run.steps[1].state, &s).unwrap();
        assert_eq!(direct.belief.weights(), st.belief.as_slice());
    }

    #[test]
    fn planning_mode_never_moves_the_belief() {
        let (s, a) = grids();
        let ens = ModelEnsemble::new(vec![gs("a", 0.6, 1.0), gs("b", 0.3, 1.2)]).unwrap();
        let ek = EnsembleKernels::build(&ens, &s, &a).unwrap();
        let prior = Belief::new(vec![0.99, 0.01]).unwrap();
        let spec = AdaptiveSpec { horizon: 15, x0: 0.9, seed: 4 };
        let run = run_adaptive(&gs("t", 0.4, 1.0), &ek, &prior, None, AdaptiveMode::Planning, &RewardSpec::default(), &spec, 2).unwrap();
        assert!(run.steps.iter().all(|s| s.belief == prior.weights()));
    }

    #[test]
    fn singleton_ensemble_has_zero_voi() {
        let (s, a) = grids();
        let truth = gs("t", 0.5, 1.0);
        let ens = ModelEnsemble::new(vec![truth.clone()]).unwrap();
        let ek = EnsembleKernels::build(&ens, &s, &a).unwrap();
        let prior = Belief::uniform(1).unwrap();
        let spec = AdaptiveSpec { horizon: 20, x0: 0.9, seed: 8 };
        let study = value_of_information(&truth, &ek, &prior, 4, &RewardSpec::default(), &spec).unwrap();
        assert_eq!(study.report.voi, 0.0);
        for (l, p) in study.learning.iter().zip(&study.planning) {
            assert_eq!(l.steps, p.steps);
        }
    }

    #[test]
    fn learning_and_planning_share_shocks_until_actions_differ() {
        let (s, a) = grids();
        let truth = gs("t", 0.4, 1.0);
        let ens = ModelEnsemble::new(vec![gs("a", 0.9, 1.3), truth.clone()]).unwrap();
        let ek = EnsembleKernels::build(&ens, &s, &a).unwrap();
        let prior = Belief::new(vec![0.99, 0.01]).unwrap();
        let spec = AdaptiveSpec { horizon: 30, x0: 0.9, seed: 21 };
        let reward = RewardSpec::default();
        let l = run_adaptive(&truth, &ek, &prior, None, AdaptiveMode::Learning, &reward, &spec, 5).unwrap();
        let p = run_adaptive(&truth, &ek, &prior, None, AdaptiveMode::Planning, &reward, &spec, 5).unwrap();
        // Replay the planning run's shocks: identical inputs give identical states.
        let mut rng = replicate_rng(21, 5);
        for (ls, ps) in l.steps.iter().zip(&p.steps) {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            assert_eq!(truth.step_with_shock(ps.state, ps.quota, z).unwrap().harvest, ps.harvest);
            if ls.quota != ps.quota {
                break;
            }
            assert_eq!(ls.state, ps.state);
        }
    }

    #[test]
    fn voi_needs_two_reps() {
        let (s, a) = grids();
        let truth = gs("t", 0.5, 1.0);
        let ek = EnsembleKernels::build(&ModelEnsemble::new(vec![truth.clone()]).unwrap(), &s, &a).unwrap();
        let spec = AdaptiveSpec { horizon: 5, x0: 0.9, seed: 8 };
        let err = value_of_information(&truth, &ek, &Belief::uniform(1).unwrap(), 1, &RewardSpec::default(), &spec).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
