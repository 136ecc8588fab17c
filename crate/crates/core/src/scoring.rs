//! One-step-ahead forecasts and log scores.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{ModelEnsemble, StochasticModel};
use crate::mdp::{transition_row, ActionGrid, Policy, StateGrid};
use crate::rng::replicate_rng;
use crate::stats::{self, Interval};

/// Predictive distribution over the bins of a state grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub probabilities: Vec<f64>,
    /// Central 95% interval, as grid values.
    pub lo95: f64,
    pub hi95: f64,
}

impl Forecast {
    /// Wrap a probability vector, checking it against the grid.
    pub fn new(probabilities: Vec<f64>, states: &StateGrid) -> Result<Self> {
        if probabilities.len() != states.len() {
            return Err(Error::Validation("forecast length differs from the state grid".into()));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Validation("forecast has a negative or NaN entry".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("forecast sums to {total}")));
        }
        let lo95 = states.values()[central_index(&probabilities, 0.025)];
        let hi95 = states.values()[central_index(&probabilities, 0.975)];
        Ok(Self { probabilities, lo95, hi95 })
    }

    /// Mean of the discretized distribution.
    pub fn mean(&self, states: &StateGrid) -> f64 {
        self.probabilities.iter().zip(states.values()).map(|(p, x)| p * x).sum()
    }
}

fn central_index(p: &[f64], q: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if acc >= q {
            return i;
        }
    }
    p.len() - 1
}

/// Forecast of next season's biomass from `x` (snapped to its grid bin) under `quota`.
///
/// Identical, bit for bit, to the matching row of
/// [`discretize_kernel`](crate::mdp::discretize_kernel) whenever `quota` is on
/// the action grid.
pub fn one_step_forecast(model: &StochasticModel, x: f64, quota: f64, states: &StateGrid) -> Result<Forecast> {
    if !(x >= 0.0) || !(quota >= 0.0) {
        return Err(Error::Domain(format!("forecast needs x >= 0 and quota >= 0 (x={x}, quota={quota})")));
    }
    let snapped = states.values()[states.bin_of(x)];
    Forecast::new(transition_row(model, states, snapped, quota)?, states)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    /// Natural-log score; `-inf` when the observed bin had zero probability.
    pub score: f64,
    /// The observation lay beyond the last grid value.
    pub above_grid: bool,
}

/// Log probability of the bin containing `observed`.
pub fn log_score(forecast: &Forecast, observed: f64, states: &StateGrid) -> Result<ScoreOutcome> {
    if !(observed >= 0.0) {
        return Err(Error::Domain(format!("observation must be >= 0, got {observed}")));
    }
    let (bin, above_grid) = states.locate(observed);
    let p = forecast.probabilities[bin];
    let score = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    Ok(ScoreOutcome { score, above_grid })
}

/// Who sets the quota while forecasts are being scored.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyMode {
    /// No harvest; every candidate scores the same truth trajectory.
    Unfished,
    /// Candidate `i` manages its own truth trajectory with `policies[i]`.
    Managed(Vec<Policy>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignSpec {
    pub reps: usize,
    pub horizon: usize,
    pub x0: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStep {
    pub t: usize,
    pub state: f64,
    pub action: f64,
    pub harvest: f64,
    pub observed_next: f64,
    pub score: f64,
    pub above_grid: bool,
}

/// Per-season scores of one model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub model: String,
    pub replicate: usize,
    pub steps: Vec<ScoreStep>,
}

impl ScoreSeries {
    pub fn neg_inf_count(&self) -> usize {
        self.steps.iter().filter(|s| s.score == f64::NEG_INFINITY).count()
    }

    /// Mean over finite scores.
    pub fn mean_finite(&self) -> f64 {
        let finite: Vec<f64> = self.steps.iter().map(|s| s.score).filter(|s| s.is_finite()).collect();
        stats::mean(&finite)
    }
}

fn validate_campaign(spec: &CampaignSpec) -> Result<()> {
    if spec.reps == 0 {
        return Err(Error::config("reps", "must be >= 1"));
    }
    if spec.horizon == 0 {
        return Err(Error::config("horizon", "must be >= 1"));
    }
    if !(spec.x0 >= 0.0) {
        return Err(Error::config("x0", "must be >= 0"));
    }
    Ok(())
}

/// Score every candidate over `spec.reps` replicate truth trajectories.
///
/// Output is ordered by replicate, then by candidate. In managed mode every
/// candidate's trajectory for replicate `i` uses the same shock stream.
pub fn score_campaign(
    candidates: &ModelEnsemble,
    truth: &StochasticModel,
    mode: &PolicyMode,
    states: &StateGrid,
    actions: &ActionGrid,
    spec: &CampaignSpec,
) -> Result<Vec<ScoreSeries>> {
    validate_campaign(spec)?;
    if let PolicyMode::Managed(p) = mode {
        if p.len() != candidates.len() {
            return Err(Error::Validation("managed mode needs one policy per candidate".into()));
        }
    }
    let per_rep: Vec<Result<Vec<ScoreSeries>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| match mode {
            PolicyMode::Unfished => {
                let mut rng = replicate_rng(spec.seed, rep as u64);
                let mut path = Vec::with_capacity(spec.horizon + 1);
                path.push(spec.x0);
                for _ in 0..spec.horizon {
                    let x = *path.last().unwrap();
                    path.push(truth.step(x, 0.0, &mut rng)?.next);
                }
                candidates
                    .iter()
                    .map(|m| {
                        let steps = (0..spec.horizon)
                            .map(|t| {
                                let f = one_step_forecast(m, path[t], 0.0, states)?;
                                let s = log_score(&f, path[t + 1], states)?;
                                Ok(ScoreStep {
                                    t,
                                    state: path[t],
                                    action: 0.0,
                                    harvest: 0.0,
                                    observed_next: path[t + 1],
                                    score: s.score,
                                    above_grid: s.above_grid,
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(ScoreSeries { model: m.label().to_string(), replicate: rep, steps })
                    })
                    .collect()
            }
            PolicyMode::Managed(policies) => candidates
                .iter()
                .zip(policies)
                .map(|(m, pol)| {
                    let mut rng = replicate_rng(spec.seed, rep as u64);
                    let mut x = spec.x0;
                    let mut steps = Vec::with_capacity(spec.horizon);
                    for t in 0..spec.horizon {
                        let quota = pol.quota(states.bin_of(x), actions);
                        let f = one_step_forecast(m, x, quota, states)?;
                        let out = truth.step(x, quota, &mut rng)?;
                        let s = log_score(&f, out.next, states)?;
                        steps.push(ScoreStep {
                            t,
                            state: x,
                            action: quota,
                            harvest: out.harvest,
                            observed_next: out.next,
                            score: s.score,
                            above_grid: s.above_grid,
                        });
                        x = out.next;
                    }
                    Ok(ScoreSeries { model: m.label().to_string(), replicate: rep, steps })
                })
                .collect(),
        })
        .collect();
    let mut out = Vec::with_capacity(spec.reps * candidates.len());
    for r in per_rep {
        out.extend(r?);
    }
    Ok(out)
}

/// Per-model summary of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScoreSummary {
    pub model: String,
    pub mean_score: f64,
    pub neg_inf_count: usize,
    pub above_grid_count: usize,
    pub n: usize,
}

/// Pool every finite score per model, preserving first-appearance order.
pub fn summarize_scores(series: &[ScoreSeries]) -> Vec<ModelScoreSummary> {
    let mut order: Vec<String> = Vec::new();
    for s in series {
        if !order.contains(&s.model) {
            order.push(s.model.clone());
        }
    }
    order
        .into_iter()
        .map(|model| {
            let mut finite = Vec::new();
            let (mut neg_inf, mut above, mut n) = (0, 0, 0);
            for s in series.iter().filter(|s| s.model == model) {
                for st in &s.steps {
                    n += 1;
                    if st.score.is_finite() {
                        finite.push(st.score);
                    } else {
                        neg_inf += 1;
                    }
                    above += usize::from(st.above_grid);
                }
            }
            ModelScoreSummary { model, mean_score: stats::mean(&finite), neg_inf_count: neg_inf, above_grid_count: above, n }
        })
        .collect()
}

/// Bootstrap CI for the mean over replicates of `mean(a) - mean(b)`, pairing by replicate.
pub fn score_difference_ci(series: &[ScoreSeries], a: &str, b: &str, seed: u64) -> Result<Interval> {
    let per_rep = |label: &str| -> Vec<(usize, f64)> {
        series.iter().filter(|s| s.model == label).map(|s| (s.replicate, s.mean_finite())).collect()
    };
    let (sa, sb) = (per_rep(a), per_rep(b));
    if sa.is_empty() || sa.len() != sb.len() {
        return Err(Error::Validation(format!("models `{a}` and `{b}` need matching replicates")));
    }
    let diffs: Vec<f64> = sa.iter().zip(&sb).map(|((_, x), (_, y))| x - y).collect();
    Ok(stats::bootstrap_mean_ci(&diffs, 0.95, stats::BOOTSTRAP_RESAMPLES, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyCheck {
    pub truth: String,
    pub other: String,
    /// Mean of `score(truth) - score(other)` over finite pairs.
    pub mean_difference: f64,
    /// Normal-approximation 95% interval for that mean.
    pub ci: Interval,
    /// Pairs where `other` gave the observed bin zero probability.
    pub other_zero_probability: usize,
    pub samples: usize,
}

impl ProprietyCheck {
    /// Truth scores at least as well as the alternative at 95% confidence.
    pub fn holds(&self) -> bool {
        self.ci.low >= 0.0 || self.mean_difference.is_nan() && self.other_zero_probability == self.samples
    }
}

/// Monte Carlo check that `truth` out-scores `other` on data drawn from `truth`.
///
/// Starting states are uniform on `[x_lo, x_hi]`, quotas are zero.
pub fn propriety_check(
    truth: &StochasticModel,
    other: &StochasticModel,
    states: &StateGrid,
    (x_lo, x_hi): (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<ProprietyCheck> {
    let mut rng = replicate_rng(seed, 0);
    let mut diffs = Vec::with_capacity(samples);
    let mut zero = 0;
    for _ in 0..samples {
        let x = states.values()[states.bin_of(x_lo + (x_hi - x_lo) * rng.random::<f64>())];
        let z: f64 = rng.sample(StandardNormal);
        let obs = truth.step_with_shock(x, 0.0, z)?.next;
        let sp = log_score(&one_step_forecast(truth, x, 0.0, states)?, obs, states)?.score;
        let sq = log_score(&one_step_forecast(other, x, 0.0, states)?, obs, states)?.score;
        if sq == f64::NEG_INFINITY {
            zero += 1;
        } else {
            diffs.push(sp - sq);
        }
    }
    let m = stats::mean(&diffs);
    let half = 1.959963984540054 * stats::std_dev(&diffs) / (diffs.len().max(1) as f64).sqrt();
    Ok(ProprietyCheck {
        truth: truth.label().to_string(),
        other: other.label().to_string(),
        mean_difference: m,
        ci: Interval { low: m - half, high: m + half },
        other_zero_probability: zero,
        samples,
    })
}
