//! Discretized harvest MDPs and their solvers.
//!
//! A stochastic model is turned into a [`TransitionKernel`] over a
//! [`StateGrid`] and an [`ActionGrid`]; [`value_iterate`] (or
//! [`policy_iterate`]) then returns the optimal quota per state. The
//! escapement helpers read a policy back as "biomass left in the water" and
//! check it against the analytic constant-escapement level.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{GrowthCurve, StochasticModel};

/// Relative tolerance under which two Q-values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Biomass levels; bin `i` spans the midpoints to its neighbours and the last
/// bin is open above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateGrid {
    values: Vec<f64>,
    edges: Vec<f64>,
}

impl TryFrom<Vec<f64>> for StateGrid {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<StateGrid> for Vec<f64> {
    fn from(g: StateGrid) -> Self {
        g.values
    }
}

impl StateGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Validation("state grid needs at least 3 points".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::Validation("state grid must start at 0".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Validation("state grid must be strictly increasing".into()));
        }
        let edges = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { values, edges })
    }

    /// `n` evenly spaced points on `[0, top]`.
    pub fn uniform(n: usize, top: f64) -> Result<Self> {
        if n < 2 || !(top > 0.0) {
            return Err(Error::Validation(format!("bad uniform state grid (n={n}, top={top})")));
        }
        Self::new((0..n).map(|i| top * i as f64 / (n - 1) as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior bin edges (midpoints), `len() - 1` of them.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn top(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Widest spacing between neighbouring points.
    pub fn cell_width(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the bin containing `x` (negative values map to bin 0).
    pub fn bin_of(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }

    /// Bin plus a flag for observations beyond the last grid value.
    pub fn locate(&self, x: f64) -> (usize, bool) {
        (self.bin_of(x), x > self.top())
    }
}

/// Quota levels, ascending, starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ActionGrid {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ActionGrid> for Vec<f64> {
    fn from(g: ActionGrid) -> Self {
        g.values
    }
}

impl ActionGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values[0] != 0.0 {
            return Err(Error::Validation("action grid must contain 0 as its first value".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Validation("action grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize, top: f64) -> Result<Self> {
        if n < 2 || !(top > 0.0) {
            return Err(Error::Validation(format!("bad uniform action grid (n={n}, top={top})")));
        }
        Self::new((0..n).map(|i| top * i as f64 / (n - 1) as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// `P(x' | x, a)` stored densely as `[action][state][next]`, with the nonzero
/// span of each row cached for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n_actions: usize,
    n_states: usize,
    probs: Vec<f64>,
    support: Vec<(u32, u32)>,
}

impl TransitionKernel {
    /// Build from a flat `[action][state][next]` array, validating every row.
    pub fn from_dense(n_actions: usize, n_states: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_actions * n_states * n_states {
            return Err(Error::Validation(format!(
                "kernel has {} entries, expected {}",
                probs.len(),
                n_actions * n_states * n_states
            )));
        }
        let mut k = Self { n_actions, n_states, probs, support: Vec::new() };
        k.refresh_support();
        k.validate()?;
        Ok(k)
    }

    fn refresh_support(&mut self) {
        let n = self.n_states;
        self.support = self
            .probs
            .chunks(n)
            .map(|row| {
                let lo = row.iter().position(|&p| p != 0.0).unwrap_or(0);
                let hi = row.iter().rposition(|&p| p != 0.0).map_or(0, |i| i + 1);
                (lo as u32, hi as u32)
            })
            .collect();
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, action: usize, state: usize) -> &[f64] {
        let start = (action * self.n_states + state) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// `sum_j P(j | state, action) v[j]` over the row's nonzero span.
    #[inline]
    pub fn expect(&self, action: usize, state: usize, v: &[f64]) -> f64 {
        let r = action * self.n_states + state;
        let (lo, hi) = self.support[r];
        let row = &self.probs[r * self.n_states..(r + 1) * self.n_states];
        row[lo as usize..hi as usize]
            .iter()
            .zip(&v[lo as usize..hi as usize])
            .map(|(p, x)| p * x)
            .sum()
    }

    /// Every row nonnegative and summing to one within 1e-10.
    pub fn validate(&self) -> Result<()> {
        for a in 0..self.n_actions {
            for x in 0..self.n_states {
                let row = self.row(a, x);
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Numerical(format!("kernel row (a={a}, x={x}) has an invalid entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-10 {
                    return Err(Error::Numerical(format!("kernel row (a={a}, x={x}) sums to {s}")));
                }
            }
        }
        Ok(())
    }

    /// Convex combination `sum_i w_i K_i`; members with zero weight are skipped.
    pub fn mixture(kernels: &[&TransitionKernel], weights: &[f64]) -> Result<Self> {
        if kernels.is_empty() || kernels.len() != weights.len() {
            return Err(Error::Validation("mixture needs one weight per kernel".into()));
        }
        let (na, ns) = (kernels[0].n_actions, kernels[0].n_states);
        if kernels.iter().any(|k| k.n_actions != na || k.n_states != ns) {
            return Err(Error::Validation("mixture kernels must share grids".into()));
        }
        let mut probs = vec![0.0; na * ns * ns];
        let mut support = vec![(u32::MAX, 0u32); na * ns];
        for (k, &w) in kernels.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            probs
                .par_chunks_mut(ns)
                .zip(k.probs.par_chunks(ns))
                .zip(support.par_iter_mut().zip(k.support.par_iter()))
                .for_each(|((dst, src), (span, &(lo, hi)))| {
                    let (l, h) = (lo as usize, hi as usize);
                    for (d, s) in dst[l..h].iter_mut().zip(&src[l..h]) {
                        *d += w * s;
                    }
                    if lo < hi {
                        span.0 = span.0.min(lo);
                        span.1 = span.1.max(hi);
                    }
                });
        }
        for span in support.iter_mut() {
            if span.0 > span.1 {
                *span = (0, 0);
            }
        }
        Ok(Self { n_actions: na, n_states: ns, probs, support })
    }

    /// Nonzero entries as `action_index,state_index,next_index,probability`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["action_index", "state_index", "next_index", "probability"])?;
        for a in 0..self.n_actions {
            for x in 0..self.n_states {
                for (j, &p) in self.row(a, x).iter().enumerate() {
                    if p != 0.0 {
                        wtr.write_record([a.to_string(), x.to_string(), j.to_string(), p.to_string()])?;
                    }
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("kernel csv", e))?;
        Ok(())
    }
}

/// Probability vector over `states` for next season's biomass when the stock
/// sits at grid value `x` and `quota` is applied.
///
/// This is the single code path behind both kernels and forecasts.
pub fn transition_row(model: &StochasticModel, states: &StateGrid, x: f64, quota: f64) -> Result<Vec<f64>> {
    let mut row = vec![0.0; states.len()];
    fill_row(model, states, x, quota, &mut row)?;
    Ok(row)
}

fn fill_row(model: &StochasticModel, states: &StateGrid, x: f64, quota: f64, row: &mut [f64]) -> Result<()> {
    let escapement = (x - quota).max(0.0);
    let mean = model.curve.growth(escapement)?;
    row.iter_mut().for_each(|p| *p = 0.0);
    if !mean.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite growth {mean} for `{}` at escapement {escapement}",
            model.label()
        )));
    }
    if mean == 0.0 {
        row[0] = 1.0;
        return Ok(());
    }
    let sigma = model.sigma;
    if sigma == 0.0 {
        row[states.bin_of(mean)] = 1.0;
        return Ok(());
    }
    let mu = mean.ln() - 0.5 * sigma * sigma;
    // Mass of bin j is P(edge[j-1] <= Y < edge[j]) for Y lognormal(mu, sigma).
    let mut prev_z = f64::NEG_INFINITY;
    let edges = states.edges();
    for (j, p) in row.iter_mut().enumerate() {
        let z = if j < edges.len() { (edges[j].ln() - mu) / sigma } else { f64::INFINITY };
        *p = crate::stats::normal_interval(prev_z, z);
        prev_z = z;
    }
    let total: f64 = row.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical(format!(
            "degenerate transition row for `{}` (x={x}, quota={quota}, total={total})",
            model.label()
        )));
    }
    row.iter_mut().for_each(|p| *p /= total);
    Ok(())
}

/// Discretize `model` on the given grids.
pub fn discretize_kernel(model: &StochasticModel, states: &StateGrid, actions: &ActionGrid) -> Result<TransitionKernel> {
    let ns = states.len();
    let na = actions.len();
    let mut probs = vec![0.0; na * ns * ns];
    probs
        .par_chunks_mut(ns)
        .enumerate()
        .try_for_each(|(r, row)| {
            let (a, x) = (r / ns, r % ns);
            fill_row(model, states, states.values()[x], actions.values()[a], row).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("{msg} [action {a}, state {x}]")),
                other => other,
            })
        })?;
    let mut k = TransitionKernel { n_actions: na, n_states: ns, probs, support: Vec::new() };
    k.refresh_support();
    Ok(k)
}

/// Price per unit harvest and discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpec {
    pub price: f64,
    pub delta: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { price: 1.0, delta: 0.99 }
    }
}

impl RewardSpec {
    pub fn new(price: f64, delta: f64) -> Result<Self> {
        let spec = Self { price, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.price >= 0.0) || !self.price.is_finite() {
            return Err(Error::config("reward.price", format!("must be >= 0, got {}", self.price)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config("reward.delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }

    /// Immediate reward `price * min(quota, x)`.
    pub fn reward(&self, x: f64, quota: f64) -> f64 {
        self.price * quota.min(x)
    }
}

/// Immediate reward per `(action, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    n_actions: usize,
    n_states: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn from_fn(n_actions: usize, n_states: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..n_actions)
            .flat_map(|a| (0..n_states).map(move |x| (a, x)))
            .map(|(a, x)| f(a, x))
            .collect();
        Self { n_actions, n_states, values }
    }

    pub fn harvest(spec: &RewardSpec, states: &StateGrid, actions: &ActionGrid) -> Self {
        Self::from_fn(actions.len(), states.len(), |a, x| {
            spec.reward(states.values()[x], actions.values()[a])
        })
    }

    #[inline]
    pub fn get(&self, action: usize, state: usize) -> f64 {
        self.values[action * self.n_states + state]
    }
}

/// Chosen action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn quota(&self, state: usize, actions: &ActionGrid) -> f64 {
        actions.values()[self.0[state]]
    }

    /// Largest per-state difference in action index.
    pub fn max_index_gap(&self, other: &Policy) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, w: W, states: &StateGrid, actions: &ActionGrid) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["state_index", "state", "action_index", "quota"])?;
        for (i, &a) in self.0.iter().enumerate() {
            wtr.write_record([
                i.to_string(),
                states.values()[i].to_string(),
                a.to_string(),
                actions.values()[a].to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("policy csv", e))?;
        Ok(())
    }
}

/// Expected discounted value per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.0.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    pub fn write_csv<W: Write>(&self, w: W, states: &StateGrid) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["state_index", "state", "value"])?;
        for (i, v) in self.0.iter().enumerate() {
            wtr.write_record([i.to_string(), states.values()[i].to_string(), v.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("value csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Infinite,
    /// Backward induction over this many seasons; the stage-0 policy is returned.
    Finite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub horizon: Horizon,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, horizon: Horizon::Infinite }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final sup-norm Bellman residual (zero for finite horizons).
    pub residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: ValueFunction,
    pub policy: Policy,
    pub report: SolveReport,
}

fn check_dims(kernel: &TransitionKernel, rewards: &RewardTable) -> Result<()> {
    if kernel.n_actions != rewards.n_actions || kernel.n_states != rewards.n_states {
        return Err(Error::Validation("reward table does not match kernel dimensions".into()));
    }
    Ok(())
}

fn check_delta(delta: f64, horizon: Horizon) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config("reward.delta", format!("must lie in (0, 1], got {delta}")));
    }
    if delta >= 1.0 && horizon == Horizon::Infinite {
        return Err(Error::config(
            "reward.delta",
            "delta = 1 requires a finite horizon; infinite-horizon iteration needs delta < 1",
        ));
    }
    Ok(())
}

/// Bellman backup at one state; returns `(best value, smallest tied action)`.
#[inline]
fn backup(kernel: &TransitionKernel, rewards: &RewardTable, delta: f64, v: &[f64], x: usize) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut q = Vec::with_capacity(kernel.n_actions);
    for a in 0..kernel.n_actions {
        let qa = rewards.get(a, x) + delta * kernel.expect(a, x, v);
        best = best.max(qa);
        q.push(qa);
    }
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let arg = q.iter().position(|&qa| qa >= best - tol).unwrap_or(0);
    (best, arg)
}

/// One synchronous Bellman sweep; returns the new values and greedy policy.
pub fn bellman_sweep(kernel: &TransitionKernel, rewards: &RewardTable, delta: f64, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    (0..kernel.n_states)
        .into_par_iter()
        .map(|x| backup(kernel, rewards, delta, v, x))
        .unzip()
}

/// Value iteration on an arbitrary reward table.
pub fn solve_value_iteration(
    kernel: &TransitionKernel,
    rewards: &RewardTable,
    delta: f64,
    opts: &SolveOptions,
    warm_start: Option<&ValueFunction>,
) -> Result<Solution> {
    check_dims(kernel, rewards)?;
    check_delta(delta, opts.horizon)?;
    let n = kernel.n_states;
    let mut v = match warm_start {
        Some(w) if w.0.len() == n => w.0.clone(),
        _ => vec![0.0; n],
    };
    match opts.horizon {
        Horizon::Finite(stages) => {
            let mut policy = vec![0; n];
            for _ in 0..stages {
                let (nv, pol) = bellman_sweep(kernel, rewards, delta, &v);
                v = nv;
                policy = pol;
            }
            Ok(Solution {
                value: ValueFunction(v),
                policy: Policy(policy),
                report: SolveReport { iterations: stages, residual: 0.0, converged: true, residual_history: vec![] },
            })
        }
        Horizon::Infinite => {
            let mut history = Vec::new();
            let mut converged = false;
            let mut iterations = 0;
            while iterations < opts.max_iter {
                let (nv, _) = bellman_sweep(kernel, rewards, delta, &v);
                let residual = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if !residual.is_finite() {
                    return Err(Error::Numerical("value iteration diverged".into()));
                }
                history.push(residual);
                v = nv;
                iterations += 1;
                if residual < opts.tol {
                    converged = true;
                    break;
                }
            }
            let (_, policy) = bellman_sweep(kernel, rewards, delta, &v);
            Ok(Solution {
                value: ValueFunction(v),
                policy: Policy(policy),
                report: SolveReport {
                    iterations,
                    residual: history.last().copied().unwrap_or(f64::INFINITY),
                    converged,
                    residual_history: history,
                },
            })
        }
    }
}

/// Optimal harvest policy for `kernel` with reward `price * min(quota, x)`.
///
/// Stops when the sup-norm change between sweeps drops below `opts.tol` or
/// after `opts.max_iter` sweeps (reported in [`SolveReport::converged`]).
/// Ties go to the smallest quota.
pub fn value_iterate(
    kernel: &TransitionKernel,
    reward: &RewardSpec,
    states: &StateGrid,
    actions: &ActionGrid,
    opts: &SolveOptions,
) -> Result<Solution> {
    reward.validate()?;
    let rewards = RewardTable::harvest(reward, states, actions);
    solve_value_iteration(kernel, &rewards, reward.delta, opts, None)
}

/// Exact evaluation of a fixed policy: solves `(I - delta P_pi) v = r_pi`.
pub fn evaluate_policy(kernel: &TransitionKernel, rewards: &RewardTable, delta: f64, policy: &Policy) -> Result<ValueFunction> {
    check_dims(kernel, rewards)?;
    let n = kernel.n_states;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for x in 0..n {
        let a = policy.0[x];
        b[x] = rewards.get(a, x);
        for (j, &p) in kernel.row(a, x).iter().enumerate() {
            m[(x, j)] -= delta * p;
        }
    }
    let sol = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    Ok(ValueFunction(sol.iter().copied().collect()))
}

/// Howard policy iteration with exact linear-solve evaluation.
///
/// Used for re-planning, where a warm-start policy from the previous season
/// usually converges in one or two improvement steps. The returned policy
/// applies the same smallest-quota tie rule as [`value_iterate`].
pub fn policy_iterate(
    kernel: &TransitionKernel,
    rewards: &RewardTable,
    delta: f64,
    max_iter: usize,
    warm_start: Option<&Policy>,
) -> Result<Solution> {
    check_dims(kernel, rewards)?;
    check_delta(delta, Horizon::Infinite)?;
    let n = kernel.n_states;
    let mut policy = match warm_start {
        Some(p) if p.0.len() == n && p.0.iter().all(|&a| a < kernel.n_actions) => p.clone(),
        _ => Policy(vec![0; n]),
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut value = evaluate_policy(kernel, rewards, delta, &policy)?;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        let next: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|x| {
                let current = policy.0[x];
                let q: Vec<f64> = (0..kernel.n_actions)
                    .map(|a| rewards.get(a, x) + delta * kernel.expect(a, x, &value.0))
                    .collect();
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = TIE_TOLERANCE * best.abs().max(1.0);
                if q[current] >= best - tol {
                    current
                } else {
                    q.iter().position(|&qa| qa >= best - tol).unwrap_or(0)
                }
            })
            .collect();
        if next != policy.0 {
            changed = true;
            policy = Policy(next);
            value = evaluate_policy(kernel, rewards, delta, &policy)?;
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let (after, greedy) = bellman_sweep(kernel, rewards, delta, &value.0);
    let residual = after.iter().zip(&value.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Solution {
        value,
        policy: Policy(greedy),
        report: SolveReport { iterations, residual, converged, residual_history: vec![] },
    })
}

/// Escapement `x - quota(x)` per state plus the constant-escapement diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapementProfile {
    pub escapement: Vec<f64>,
    /// First state with a positive quota.
    pub threshold_state: Option<usize>,
    /// Median escapement over the checked states, when a threshold exists.
    pub level: Option<f64>,
    /// Escapement constant within one state cell for every state at or above
    /// the threshold whose quota is below the action-grid ceiling.
    pub bang_bang: bool,
    /// States skipped because their quota sits at the top of the action grid.
    pub saturated_states: usize,
}

pub fn escapement_profile(policy: &Policy, states: &StateGrid, actions: &ActionGrid) -> EscapementProfile {
    let escapement: Vec<f64> = policy
        .0
        .iter()
        .enumerate()
        .map(|(i, &a)| (states.values()[i] - actions.values()[a]).max(0.0))
        .collect();
    let top_action = actions.len() - 1;
    let threshold_state = policy.0.iter().position(|&a| a > 0);
    let Some(t) = threshold_state else {
        return EscapementProfile { escapement, threshold_state: None, level: None, bang_bang: false, saturated_states: 0 };
    };
    let mut checked = Vec::new();
    let mut saturated_states = 0;
    for i in t..policy.0.len() {
        if policy.0[i] == top_action && top_action > 0 {
            saturated_states += 1;
        } else {
            checked.push(escapement[i]);
        }
    }
    if checked.is_empty() {
        return EscapementProfile { escapement, threshold_state, level: None, bang_bang: false, saturated_states };
    }
    let lo = checked.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = checked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let level = crate::stats::quantile(&checked, 0.5);
    // Below the threshold nothing is harvested, so escapement equals the state.
    let below_ok = (0..t).all(|i| policy.0[i] == 0);
    let bang_bang = below_ok && hi - lo <= states.cell_width() + 1e-12;
    EscapementProfile { escapement, threshold_state, level: Some(level), bang_bang, saturated_states }
}

const GOLDEN_TOL: f64 = 1e-8;

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, what: &str) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.signum() != fhi.signum()) || flo == 0.0 && fhi == 0.0 {
        return Err(Error::Numerical(format!(
            "{what}: no sign change on bracket [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    let lo_positive = flo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Biomass maximizing net growth `growth(x) - x` on `[0, 1.5 scale]`.
pub fn peak_net_growth(curve: &GrowthCurve) -> f64 {
    golden_max(|x| curve.eval(x) - x, 0.0, 1.5 * curve.scale())
}

/// Analytic constant-escapement level for a small-noise harvest problem.
///
/// With `delta = 1` this is the peak of net growth. With `delta < 1` it is
/// the root of `growth'(x) = 1 / delta` between zero and that peak, found by
/// bisection; no sign change means low-density growth is too slow to beat
/// discounting, and an error naming the bracket is returned.
pub fn reed_escapement(curve: &GrowthCurve, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    let peak = peak_net_growth(curve);
    if delta == 1.0 {
        return Ok(peak);
    }
    let target = 1.0 / delta;
    bisect(|x| curve.derivative(x) - target, 0.0, peak, "escapement root growth'(x) = 1/delta")
}

/// Root of `growth(x) / x = 1 / delta` on the decreasing branch of the
/// per-capita growth curve. Reported as a diagnostic alongside the marginal
/// rule used by [`reed_escapement`]; the two coincide only in special cases.
pub fn per_capita_escapement_root(curve: &GrowthCurve, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    let top = 1.5 * curve.scale();
    let per_capita = |x: f64| if x <= 0.0 { curve.derivative(0.0) } else { curve.eval(x) / x };
    let start = golden_max(per_capita, 0.0, top);
    bisect(|x| per_capita(x) - 1.0 / delta, start, top, "per-capita root growth(x)/x = 1/delta")
}
