//! Multispecies food-web management under partial observation.
//!
//! The truth is a five-species Ricker web (bass, cormorant, three herring).
//! Managers see only bass and cormorant, plan with a three-species candidate
//! that lumps the herring, and pick one fixed pair of harvest efforts for the
//! whole horizon.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{replicate_rng, stream_seed, SimRng};
use crate::stats;

pub const BASS: usize = 0;
pub const CORMORANT: usize = 1;

/// `x_i' = x_i exp(r_i + sum_j A_ij x_j + sigma_i Z_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RickerSystem {
    pub r: Vec<f64>,
    /// Row `i` holds the per-biomass effects of every species on species `i`.
    pub a: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl RickerSystem {
    pub fn new(r: Vec<f64>, a: Vec<Vec<f64>>, sigma: Vec<f64>) -> Result<Self> {
        let s = Self { r, a, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.r.len();
        if n == 0 || self.a.len() != n || self.a.iter().any(|row| row.len() != n) || self.sigma.len() != n {
            return Err(Error::Validation(format!("Ricker system needs r, sigma of length n and an n x n matrix (n={n})")));
        }
        if self.r.iter().chain(self.a.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("Ricker parameters must be finite".into()));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Validation("Ricker noise levels must be finite and >= 0".into()));
        }
        if (0..n).any(|i| !(self.a[i][i] < 0.0)) {
            return Err(Error::Validation("self-interaction terms must be negative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    /// Growth of `x` with the supplied standard normal shocks.
    pub fn grow(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let drive: f64 = self.a[i].iter().zip(x).map(|(a, xj)| a * xj).sum();
                x[i] * (self.r[i] + drive + self.sigma[i] * z[i]).exp()
            })
            .collect()
    }

    /// Interior fixed point `r + A x = 0`.
    pub fn equilibrium(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| self.a[i][j]);
        let b = DVector::from_iterator(n, self.r.iter().map(|r| -r));
        let x = m.lu().solve(&b).ok_or_else(|| Error::Numerical("singular interaction matrix".into()))?;
        Ok(x.iter().copied().collect())
    }
}

/// Something the manager (or nature) can simulate under fixed efforts.
pub trait EcoModel: Sync {
    fn label(&self) -> &str;
    fn system(&self) -> &RickerSystem;
    /// Indices of the herring variables.
    fn herring(&self) -> Range<usize>;
}

/// The five-species truth: bass, cormorant, herring 1-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodWeb {
    pub system: RickerSystem,
    pub x0: Vec<f64>,
}

impl FoodWeb {
    pub fn new(system: RickerSystem, x0: Vec<f64>) -> Result<Self> {
        let w = Self { system, x0 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let a = &self.system.a;
        if self.system.dim() != 5 || self.x0.len() != 5 {
            return Err(Error::Validation("food web has exactly five species".into()));
        }
        if self.x0.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Validation("initial biomass must be >= 0".into()));
        }
        for h in 2..5 {
            if !(a[BASS][h] > 0.0 && a[CORMORANT][h] > 0.0) {
                return Err(Error::Validation(format!("herring {} must feed bass and cormorant", h - 1)));
            }
            if !(a[h][BASS] < 0.0 && a[h][CORMORANT] < 0.0) {
                return Err(Error::Validation(format!("herring {} must be preyed upon", h - 1)));
            }
            for g in 2..5 {
                if g != h && !(a[h][g] < 0.0) {
                    return Err(Error::Validation("herring species must compete".into()));
                }
            }
        }
        Ok(())
    }

    /// Starts from the unfished equilibrium.
    pub fn reference() -> Self {
        let herring_row = |own: usize| {
            let mut row = vec![-0.05, -0.15, -0.2, -0.2, -0.2];
            row[own] = -1.0;
            row
        };
        let system = RickerSystem {
            r: vec![-0.3, -0.3, 1.0, 0.9, 1.1],
            a: vec![
                vec![-1.0, 0.0, 0.35, 0.35, 0.35],
                vec![0.0, -0.5, 0.35, 0.35, 0.35],
                herring_row(2),
                herring_row(3),
                herring_row(4),
            ],
            sigma: vec![0.05; 5],
        };
        let x0 = system.equilibrium().expect("reference web is nonsingular");
        Self { system, x0 }
    }
}

impl EcoModel for FoodWeb {
    fn label(&self) -> &str {
        "truth"
    }
    fn system(&self) -> &RickerSystem {
        &self.system
    }
    fn herring(&self) -> Range<usize> {
        2..5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    A,
    B,
}

/// Three-species approximation: bass, cormorant, lumped herring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEcoModel {
    pub structure: Structure,
    pub system: RickerSystem,
}

impl CandidateEcoModel {
    pub fn new(structure: Structure, system: RickerSystem) -> Result<Self> {
        system.validate()?;
        if system.dim() != 3 {
            return Err(Error::Validation("candidate models have three variables".into()));
        }
        let a = &system.a;
        match structure {
            Structure::A => {
                if a[BASS][2] == 0.0 || a[CORMORANT][2] == 0.0 {
                    return Err(Error::Validation("structure A needs herring links to bass and cormorant".into()));
                }
            }
            Structure::B => {
                if a[BASS][2] != 0.0 {
                    return Err(Error::Validation("structure B has no herring link to bass".into()));
                }
                if a[2][CORMORANT] != 0.0 {
                    return Err(Error::Validation("structure B leaves herring unaffected by cormorant".into()));
                }
            }
        }
        Ok(Self { structure, system })
    }

    /// Lumped herring with rescaled interactions; tracks the web's dynamics closely.
    pub fn reference_a() -> Self {
        let s = 6.0;
        let lumped_self = (-1.0 - 0.4) / 3.0;
        Self::new(
            Structure::A,
            RickerSystem {
                r: vec![-0.3, -0.3, 1.0],
                a: vec![vec![-1.0, 0.0, 0.35 / s], vec![0.0, -0.5, 0.35 / s], vec![-0.05, -0.15, lumped_self / s]],
                sigma: vec![0.05; 3],
            },
        )
        .expect("reference structure A is valid")
    }

    /// Bass self-sustaining, herring free of predation.
    pub fn reference_b() -> Self {
        Self::new(
            Structure::B,
            RickerSystem {
                r: vec![0.4, -0.8, 1.0],
                a: vec![vec![-0.6, 0.0, 0.0], vec![0.0, -0.5, 0.8], vec![0.0, 0.0, -1.0]],
                sigma: vec![0.05; 3],
            },
        )
        .expect("reference structure B is valid")
    }

    /// Herring level at which herring growth balances, given observed bass and cormorant.
    pub fn latent_herring(&self, obs: &EcoObservation) -> f64 {
        let (r, a) = (&self.system.r, &self.system.a);
        (-(r[2] + a[2][BASS] * obs.bass + a[2][CORMORANT] * obs.cormorant) / a[2][2]).max(0.0)
    }

    /// Full candidate state from an observation.
    pub fn initial_state(&self, obs: &EcoObservation) -> Vec<f64> {
        vec![obs.bass, obs.cormorant, self.latent_herring(obs)]
    }
}

impl EcoModel for CandidateEcoModel {
    fn label(&self) -> &str {
        match self.structure {
            Structure::A => "model_A",
            Structure::B => "model_B",
        }
    }
    fn system(&self) -> &RickerSystem {
        &self.system
    }
    fn herring(&self) -> Range<usize> {
        2..3
    }
}

/// Fixed harvest fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortPolicy {
    pub effort_bass: f64,
    pub effort_herring: f64,
}

impl EffortPolicy {
    pub fn new(effort_bass: f64, effort_herring: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&effort_bass) || !(0.0..=1.0).contains(&effort_herring) {
            return Err(Error::Validation(format!("efforts must lie in [0, 1], got ({effort_bass}, {effort_herring})")));
        }
        Ok(Self { effort_bass, effort_herring })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Harvests {
    pub bass: f64,
    pub herring: f64,
}

/// What the manager measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcoObservation {
    pub bass: f64,
    pub cormorant: f64,
}

impl EcoObservation {
    pub fn of(state: &[f64]) -> Self {
        Self { bass: state[BASS], cormorant: state[CORMORANT] }
    }
}

/// Weighted, capped sum of conservation and harvest objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub weight_conservation: f64,
    pub weight_bass_harvest: f64,
    pub weight_herring_harvest: f64,
    pub cormorant_base: f64,
    pub bass_base: f64,
    pub herring_base: f64,
    pub cap: f64,
}

impl UtilitySpec {
    /// Default weights with baselines taken from an unfished state.
    pub fn from_baseline(state: &[f64]) -> Result<Self> {
        let spec = Self {
            weight_conservation: 0.5,
            weight_bass_harvest: 0.25,
            weight_herring_harvest: 0.25,
            cormorant_base: state[CORMORANT],
            bass_base: state[BASS],
            herring_base: state[2..].iter().sum(),
            cap: 2.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.weight_conservation, self.weight_bass_harvest, self.weight_herring_harvest];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config("utility", "weights must be nonnegative and sum to 1"));
        }
        if [self.cormorant_base, self.bass_base, self.herring_base, self.cap].iter().any(|b| !(*b > 0.0)) {
            return Err(Error::config("utility", "baselines and cap must be positive"));
        }
        Ok(())
    }
}

pub fn utility_per_step(cormorant: f64, harvests: &Harvests, spec: &UtilitySpec) -> f64 {
    let term = |v: f64, base: f64| (v / base).min(spec.cap);
    spec.weight_conservation * term(cormorant, spec.cormorant_base)
        + spec.weight_bass_harvest * term(harvests.bass, spec.bass_base)
        + spec.weight_herring_harvest * term(harvests.herring, spec.herring_base)
}

/// Harvest, then grow the residual with shocks `z`.
pub fn step_with_shocks<M: EcoModel + ?Sized>(model: &M, state: &[f64], efforts: &EffortPolicy, z: &[f64]) -> (Vec<f64>, Harvests) {
    let mut residual = state.to_vec();
    let bass = efforts.effort_bass * state[BASS];
    residual[BASS] = state[BASS] - bass;
    let mut herring = 0.0;
    for h in model.herring() {
        let take = efforts.effort_herring * state[h];
        herring += take;
        residual[h] = state[h] - take;
    }
    (model.system().grow(&residual, z), Harvests { bass, herring })
}

/// One season of the truth: one standard normal per species.
pub fn eco_step(web: &FoodWeb, state: &[f64], efforts: &EffortPolicy, rng: &mut SimRng) -> Result<(Vec<f64>, Harvests)> {
    if state.len() != 5 || state.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Domain("food-web state must be five nonnegative values".into()));
    }
    let z: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
    Ok(step_with_shocks(web, state, efforts, &z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `horizon + 1` states, starting with the initial one.
    pub states: Vec<Vec<f64>>,
    pub harvests: Vec<Harvests>,
    pub utilities: Vec<f64>,
    pub discounted_utility: f64,
}

/// Simulate `horizon` seasons; utility counts start-of-season cormorants.
pub fn simulate<M: EcoModel + ?Sized>(
    model: &M,
    x0: &[f64],
    efforts: &EffortPolicy,
    spec: &UtilitySpec,
    horizon: usize,
    delta: f64,
    rng: &mut SimRng,
) -> Trajectory {
    let n = model.system().dim();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut harvests = Vec::with_capacity(horizon);
    let mut utilities = Vec::with_capacity(horizon);
    let mut discounted = 0.0;
    let mut disc = 1.0;
    let mut x = x0.to_vec();
    for _ in 0..horizon {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let (next, h) = step_with_shocks(model, &x, efforts, &z);
        let u = utility_per_step(x[CORMORANT], &h, spec);
        discounted += disc * u;
        disc *= delta;
        states.push(x);
        harvests.push(h);
        utilities.push(u);
        x = next;
    }
    states.push(x);
    Trajectory { states, harvests, utilities, discounted_utility: discounted }
}

/// Monte Carlo settings shared by optimization and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub horizon: usize,
    pub reps: usize,
    pub delta: f64,
    pub seed: u64,
}

impl MonteCarlo {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("ecosystem.horizon", "must be >= 1"));
        }
        if self.reps == 0 {
            return Err(Error::config("ecosystem.reps", "must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config("ecosystem.delta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Mean discounted utility over replicates; replicate `i` always uses the same stream.
pub fn mean_discounted_utility<M: EcoModel + ?Sized>(
    model: &M,
    x0: &[f64],
    efforts: &EffortPolicy,
    spec: &UtilitySpec,
    mc: &MonteCarlo,
) -> f64 {
    let total: f64 = (0..mc.reps)
        .map(|rep| {
            let mut rng = replicate_rng(mc.seed, rep as u64);
            simulate(model, x0, efforts, spec, mc.horizon, mc.delta, &mut rng).discounted_utility
        })
        .sum();
    total / mc.reps as f64
}

/// Candidate effort levels for bass and herring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortGrid {
    pub bass: Vec<f64>,
    pub herring: Vec<f64>,
}

impl EffortGrid {
    /// `n` evenly spaced levels on `[0, 1]` for both efforts.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("ecosystem.effort_grid", "needs at least one point"));
        }
        let levels: Vec<f64> = if n == 1 { vec![0.0] } else { (0..n).map(|i| i as f64 / (n - 1) as f64).collect() };
        Ok(Self { bass: levels.clone(), herring: levels })
    }

    fn cells(&self) -> Vec<EffortPolicy> {
        self.bass
            .iter()
            .flat_map(|&b| self.herring.iter().map(move |&h| EffortPolicy { effort_bass: b, effort_herring: h }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortOptimum {
    pub efforts: EffortPolicy,
    pub value: f64,
    /// Every grid cell with its mean discounted utility, bass-major.
    pub surface: Vec<(EffortPolicy, f64)>,
}

/// Best fixed efforts on `grid` for `model` started at `x0`; ties go to the
/// earlier cell in (bass, herring) ascending order.
pub fn optimize_fixed_effort<M: EcoModel + ?Sized>(
    model: &M,
    x0: &[f64],
    spec: &UtilitySpec,
    grid: &EffortGrid,
    mc: &MonteCarlo,
) -> Result<EffortOptimum> {
    mc.validate()?;
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::config("ecosystem.effort_grid", "grid is empty"));
    }
    if cells.iter().any(|c| EffortPolicy::new(c.effort_bass, c.effort_herring).is_err()) {
        return Err(Error::config("ecosystem.effort_grid", "efforts must lie in [0, 1]"));
    }
    let surface: Vec<(EffortPolicy, f64)> = cells
        .into_par_iter()
        .map(|c| (c, mean_discounted_utility(model, x0, &c, spec, mc)))
        .collect();
    let mut best = 0;
    for (i, (_, v)) in surface.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite utility at efforts {:?}", surface[i].0)));
        }
        if *v > surface[best].1 + 1e-12 * surface[best].1.abs().max(1.0) {
            best = i;
        }
    }
    Ok(EffortOptimum { efforts: surface[best].0, value: surface[best].1, surface })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEvaluation {
    pub efforts: EffortPolicy,
    pub mean_utility: f64,
    /// `mean_utility` over the value of the truth-optimal efforts (same seeds).
    pub utility_ratio: f64,
    pub trajectories: Vec<Trajectory>,
}

/// Realized utility of `efforts` under the truth, relative to `optimal_value`.
pub fn evaluate_regime(
    truth: &FoodWeb,
    x0: &[f64],
    efforts: &EffortPolicy,
    optimal_value: f64,
    spec: &UtilitySpec,
    mc: &MonteCarlo,
) -> Result<RegimeEvaluation> {
    mc.validate()?;
    let trajectories: Vec<Trajectory> = (0..mc.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(mc.seed, rep as u64);
            simulate(truth, x0, efforts, spec, mc.horizon, mc.delta, &mut rng)
        })
        .collect();
    let mean_utility = trajectories.iter().map(|t| t.discounted_utility).sum::<f64>() / mc.reps as f64;
    Ok(RegimeEvaluation { efforts: *efforts, mean_utility, utility_ratio: mean_utility / optimal_value, trajectories })
}

/// Median and central 95% band of a forecast at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
}

impl Band {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Band {
            median: stats::quantile_sorted(&v, 0.5),
            lo: stats::quantile_sorted(&v, 0.025),
            hi: stats::quantile_sorted(&v, 0.975),
            mean: stats::mean(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFan {
    pub model: String,
    /// `[replicate][t]`, `t = 0..=horizon`.
    pub paths: Vec<Vec<EcoObservation>>,
    pub bass: Vec<Band>,
    pub cormorant: Vec<Band>,
}

/// Monte Carlo (bass, cormorant) forecast from the candidate's own dynamics.
///
/// Only observations enter: the last one sets bass and cormorant and the
/// lumped herring starts at the candidate's conditional equilibrium.
pub fn candidate_forecast(
    model: &CandidateEcoModel,
    history: &[EcoObservation],
    efforts: &EffortPolicy,
    spec: &UtilitySpec,
    mc: &MonteCarlo,
) -> Result<ForecastFan> {
    mc.validate()?;
    let last = history.last().ok_or_else(|| Error::Validation("forecast needs a nonempty history".into()))?;
    let x0 = model.initial_state(last);
    let paths: Vec<Vec<EcoObservation>> = (0..mc.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(mc.seed, rep as u64);
            let tr = simulate(model, &x0, efforts, spec, mc.horizon, mc.delta, &mut rng);
            tr.states.iter().map(|s| EcoObservation::of(s)).collect()
        })
        .collect();
    let column = |t: usize, f: fn(&EcoObservation) -> f64| paths.iter().map(|p| f(&p[t])).collect::<Vec<f64>>();
    let bass = (0..=mc.horizon).map(|t| Band::of(&column(t, |o| o.bass))).collect();
    let cormorant = (0..=mc.horizon).map(|t| Band::of(&column(t, |o| o.cormorant))).collect();
    Ok(ForecastFan { model: model.label().to_string(), paths, bass, cormorant })
}

/// Root-mean-square gap between a fan's mean (B, C) path and the mean truth
/// path, over `t = 1..=horizon`.
pub fn forecast_rmse(fan: &ForecastFan, truth: &[Trajectory]) -> Result<f64> {
    let horizon = fan.bass.len() - 1;
    if truth.is_empty() || truth.iter().any(|t| t.states.len() != horizon + 1) {
        return Err(Error::Validation("truth trajectories must match the forecast horizon".into()));
    }
    let n = truth.len() as f64;
    let mut ss = 0.0;
    for t in 1..=horizon {
        let tb = truth.iter().map(|tr| tr.states[t][BASS]).sum::<f64>() / n;
        let tc = truth.iter().map(|tr| tr.states[t][CORMORANT]).sum::<f64>() / n;
        ss += (fan.bass[t].mean - tb).powi(2) + (fan.cormorant[t].mean - tc).powi(2);
    }
    Ok((ss / (2 * horizon) as f64).sqrt())
}

/// Settings for the full trap comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapSettings {
    pub grid: EffortGrid,
    pub horizon: usize,
    pub reps: usize,
    pub delta: f64,
    /// Unfished seasons observed before management starts.
    pub history: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOutcome {
    pub label: String,
    pub optimum: EffortOptimum,
    pub fan: ForecastFan,
    /// Fan under the truth-optimal efforts.
    pub fan_at_truth_optimum: ForecastFan,
    pub realized: RegimeEvaluation,
    pub rmse: f64,
    pub rmse_at_truth_optimum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapStudy {
    pub history: Vec<Vec<f64>>,
    pub spec: UtilitySpec,
    pub truth_optimum: EffortOptimum,
    pub truth_regime: RegimeEvaluation,
    pub candidates: Vec<CandidateOutcome>,
}

/// Observe the unfished truth, let each candidate choose efforts, then score
/// its forecasts and realized utility against the truth.
pub fn run_trap_study(truth: &FoodWeb, candidates: &[CandidateEcoModel], settings: &TrapSettings) -> Result<TrapStudy> {
    truth.validate()?;
    let spec = UtilitySpec::from_baseline(&truth.system.equilibrium()?)?;
    let mut rng = replicate_rng(stream_seed(settings.seed, "history"), 0);
    let mut history = vec![truth.x0.clone()];
    let idle = EffortPolicy { effort_bass: 0.0, effort_herring: 0.0 };
    for _ in 0..settings.history {
        let (next, _) = eco_step(truth, history.last().unwrap(), &idle, &mut rng)?;
        history.push(next);
    }
    let start = history.last().unwrap().clone();
    let observed: Vec<EcoObservation> = history.iter().map(|s| EcoObservation::of(s)).collect();
    let mc = MonteCarlo { horizon: settings.horizon, reps: settings.reps, delta: settings.delta, seed: stream_seed(settings.seed, "truth") };
    let truth_optimum = optimize_fixed_effort(truth, &start, &spec, &settings.grid, &mc)?;
    let truth_regime = evaluate_regime(truth, &start, &truth_optimum.efforts, truth_optimum.value, &spec, &mc)?;
    let mut outcomes = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let own = MonteCarlo { seed: stream_seed(settings.seed, cand.label()), ..mc };
        let x0 = cand.initial_state(observed.last().unwrap());
        let optimum = optimize_fixed_effort(cand, &x0, &spec, &settings.grid, &own)?;
        let fan = candidate_forecast(cand, &observed, &optimum.efforts, &spec, &own)?;
        let fan_at_truth_optimum = candidate_forecast(cand, &observed, &truth_optimum.efforts, &spec, &own)?;
        let realized = evaluate_regime(truth, &start, &optimum.efforts, truth_optimum.value, &spec, &mc)?;
        let rmse = forecast_rmse(&fan, &realized.trajectories)?;
        let rmse_at_truth_optimum = forecast_rmse(&fan_at_truth_optimum, &truth_regime.trajectories)?;
        outcomes.push(CandidateOutcome {
            label: cand.label().to_string(),
            optimum,
            fan,
            fan_at_truth_optimum,
            realized,
            rmse,
            rmse_at_truth_optimum,
        });
    }
    Ok(TrapStudy { history, spec, truth_optimum, truth_regime, candidates: outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn quiet(web: &FoodWeb) -> FoodWeb {
        let mut w = web.clone();
        w.system.sigma = vec![0.0; 5];
        w
    }

    #[test]
    fn reference_web_is_valid_and_positive() {
        let w = FoodWeb::reference();
        w.validate().unwrap();
        assert!(w.x0.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn sign_violations_are_rejected() {
        let mut w = FoodWeb::reference();
        w.system.a[BASS][3] = -0.1;
        assert!(w.validate().is_err());
        let mut b = CandidateEcoModel::reference_b().system;
        b.a[BASS][2] = 0.1;
        assert!(CandidateEcoModel::new(Structure::B, b).is_err());
    }

    #[test]
    fn fixed_point_is_stationary_without_noise_or_harvest() {
        let w = quiet(&FoodWeb::reference());
        let idle = EffortPolicy::new(0.0, 0.0).unwrap();
        let (next, h) = step_with_shocks(&w, &w.x0, &idle, &[0.0; 5]);
        for (a, b) in next.iter().zip(&w.x0) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(h, Harvests::default());
    }

    #[test]
    fn full_bass_effort_removes_all_bass() {
        let w = FoodWeb::reference();
        let (next, h) = step_with_shocks(&w, &w.x0, &EffortPolicy::new(1.0, 0.0).unwrap(), &[0.0; 5]);
        assert_eq!(h.bass, w.x0[BASS]);
        assert_eq!(next[BASS], 0.0);
    }

    #[test]
    fn deterministic_trajectory_matches_recurrence_oracle() {
        // Oracle: the update written out species by species with explicit loops.
        let w = quiet(&FoodWeb::reference());
        let e = EffortPolicy::new(0.3, 0.4).unwrap();
        let mut rng = rng_from_seed(1);
        let spec = UtilitySpec::from_baseline(&w.x0).unwrap();
        let tr = simulate(&w, &[0.2, 0.5, 0.3, 0.2, 0.4], &e, &spec, 10, 1.0, &mut rng);
        let (r, a) = (&w.system.r, &w.system.a);
        let mut x = [0.2, 0.5, 0.3, 0.2, 0.4];
        for t in 0..10 {
            let mut y = x;
            y[0] *= 1.0 - 0.3;
            y[2] *= 1.0 - 0.4;
            y[3] *= 1.0 - 0.4;
            y[4] *= 1.0 - 0.4;
            let mut nx = [0.0; 5];
            for i in 0..5 {
                let mut s = r[i];
                for j in 0..5 {
                    s += a[i][j] * y[j];
                }
                nx[i] = y[i] * s.exp();
            }
            x = nx;
            for i in 0..5 {
                assert!((tr.states[t + 1][i] - x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn utility_reference_values() {
        let spec = UtilitySpec::from_baseline(&[2.0, 4.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(utility_per_step(0.0, &Harvests::default(), &spec), 0.0);
        let unit = utility_per_step(4.0, &Harvests { bass: 2.0, herring: 3.0 }, &spec);
        assert!((unit - 1.0).abs() < 1e-15);
        // 0.5 * 0.5 + 0.25 * min(5/2, 2) + 0.25 * (1.5/3)
        let mixed = utility_per_step(2.0, &Harvests { bass: 5.0, herring: 1.5 }, &spec);
        assert!((mixed - (0.25 + 0.5 + 0.125)).abs() < 1e-15);
    }

    #[test]
    fn conservation_only_web_prefers_no_harvest() {
        let web = FoodWeb::reference();
        let mut spec = UtilitySpec::from_baseline(&web.x0).unwrap();
        spec.weight_conservation = 1.0;
        spec.weight_bass_harvest = 0.0;
        spec.weight_herring_harvest = 0.0;
        // Cormorants without herring links: harvest cannot help them.
        let toy = CandidateEcoModel::new(
            Structure::B,
            RickerSystem::new(
                vec![0.2, 0.3, 0.5],
                vec![vec![-1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, -1.0]],
                vec![0.05; 3],
            )
            .unwrap(),
        )
        .unwrap();
        let mc = MonteCarlo { horizon: 20, reps: 10, delta: 0.99, seed: 2 };
        let opt = optimize_fixed_effort(&toy, &[0.2, 0.3, 0.5], &spec, &EffortGrid::uniform(6).unwrap(), &mc).unwrap();
        assert_eq!((opt.efforts.effort_bass, opt.efforts.effort_herring), (0.0, 0.0));
    }

    #[test]
    fn single_cell_grid_returns_that_cell() {
        let web = FoodWeb::reference();
        let spec = UtilitySpec::from_baseline(&web.x0).unwrap();
        let grid = EffortGrid { bass: vec![0.4], herring: vec![0.7] };
        let mc = MonteCarlo { horizon: 5, reps: 3, delta: 0.99, seed: 2 };
        let opt = optimize_fixed_effort(&web, &web.x0, &spec, &grid, &mc).unwrap();
        assert_eq!(opt.efforts, EffortPolicy { effort_bass: 0.4, effort_herring: 0.7 });
    }

    #[test]
    fn coarse_optimum_is_within_a_coarse_cell_of_fine_optimum() {
        let web = FoodWeb::reference();
        let spec = UtilitySpec::from_baseline(&web.x0).unwrap();
        let mc = MonteCarlo { horizon: 30, reps: 20, delta: 0.99, seed: 5 };
        let coarse = optimize_fixed_effort(&web, &web.x0, &spec, &EffortGrid::uniform(11).unwrap(), &mc).unwrap();
        let fine = optimize_fixed_effort(&web, &web.x0, &spec, &EffortGrid::uniform(21).unwrap(), &mc).unwrap();
        assert!((coarse.efforts.effort_bass - fine.efforts.effort_bass).abs() <= 0.1 + 1e-12);
        assert!((coarse.efforts.effort_herring - fine.efforts.effort_herring).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn truth_optimal_efforts_have_unit_ratio() {
        let web = FoodWeb::reference();
        let spec = UtilitySpec::from_baseline(&web.x0).unwrap();
        let mc = MonteCarlo { horizon: 20, reps: 10, delta: 0.99, seed: 5 };
        let opt = optimize_fixed_effort(&web, &web.x0, &spec, &EffortGrid::uniform(6).unwrap(), &mc).unwrap();
        let ev = evaluate_regime(&web, &web.x0, &opt.efforts, opt.value, &spec, &mc).unwrap();
        assert_eq!(ev.utility_ratio, 1.0);
        let idle = evaluate_regime(&web, &web.x0, &EffortPolicy::new(0.0, 0.0).unwrap(), opt.value, &spec, &mc).unwrap();
        assert!(idle.utility_ratio < 1.0);
    }

    #[test]
    fn noiseless_fans_collapse() {
        let mut a = CandidateEcoModel::reference_a();
        a.system.sigma = vec![0.0; 3];
        let spec = UtilitySpec::from_baseline(&FoodWeb::reference().x0).unwrap();
        let hist = [EcoObservation { bass: 0.35, cormorant: 0.7 }];
        let mc = MonteCarlo { horizon: 10, reps: 5, delta: 0.99, seed: 1 };
        let fan = candidate_forecast(&a, &hist, &EffortPolicy::new(0.2, 0.1).unwrap(), &spec, &mc).unwrap();
        assert!(fan.bass.iter().chain(&fan.cormorant).all(|b| b.lo == b.hi && b.lo == b.median));
        let again = candidate_forecast(&a, &hist, &EffortPolicy::new(0.2, 0.1).unwrap(), &spec, &mc).unwrap();
        assert_eq!(fan, again);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn states_stay_nonnegative(eb in 0.0f64..=1.0, eh in 0.0f64..=1.0, seed in 0u64..1000) {
            let web = FoodWeb::reference();
            let spec = UtilitySpec::from_baseline(&web.x0).unwrap();
            let mut rng = rng_from_seed(seed);
            let tr = simulate(&web, &web.x0, &EffortPolicy::new(eb, eh).unwrap(), &spec, 30, 0.99, &mut rng);
            prop_assert!(tr.states.iter().flatten().all(|&x| x >= 0.0 && x.is_finite()));
        }
    }
}
