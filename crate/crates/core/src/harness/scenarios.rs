//! Scenario bodies, plus the recomputation of each headline from written files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::config::{Preset, Scenario, ScenarioConfig};
use super::records::*;
use crate::adaptive::{value_of_information, voi_from_npvs, AdaptiveRun, Belief, EnsembleKernels, AdaptiveSpec};
use crate::ecosystem::{
    CandidateEcoModel, EffortGrid, FoodWeb, ForecastFan, Structure, TrapSettings, Trajectory, BASS, CORMORANT,
    run_trap_study,
};
use crate::error::{Error, Result};
use crate::growth::{gordon_schaefer_ensemble, CurveKind, GrowthCurve, ModelEnsemble, StochasticModel};
use crate::mdp::{
    discretize_kernel, escapement_profile, peak_net_growth, per_capita_escapement_root, reed_escapement,
    value_iterate, ActionGrid, Horizon, Policy, RewardSpec, Solution, SolveOptions, StateGrid, TransitionKernel,
};
use crate::outcomes::{compare_regimes, discounted_sum, managed_runs, summarize_regimes, ManagedRun, ManagedStep};
use crate::reference;
use crate::rng::stream_seed;
use crate::scoring::{score_campaign, score_difference_ci, summarize_scores, CampaignSpec, PolicyMode, ScoreSeries, ScoreStep};
use crate::stats;

/// Flat map of the statistics `summarize` re-derives.
pub type Headline = BTreeMap<String, f64>;

pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct ScenarioOutput {
    pub scenario: Scenario,
    pub seed: u64,
    pub files: Vec<OutputFile>,
    pub headline: Headline,
    pub details: Value,
}

fn file(name: &str, bytes: Vec<u8>) -> OutputFile {
    OutputFile { name: name.to_string(), bytes }
}

struct Solved {
    kernel: TransitionKernel,
    solution: Solution,
}

/// Resolved single-species models and grids, with solved policies cached by label.
pub struct SingleSpecies {
    pub truth: StochasticModel,
    pub model1: StochasticModel,
    pub model2: StochasticModel,
    pub states: StateGrid,
    pub actions: ActionGrid,
    pub reward: RewardSpec,
    pub opts: SolveOptions,
    solved: Mutex<BTreeMap<String, Arc<Solved>>>,
}

fn custom_curve(key: &str, label: &str, kind: &CurveKind) -> Result<GrowthCurve> {
    GrowthCurve::new(label, kind.clone()).map_err(|e| Error::config(key, e.to_string()))
}

impl SingleSpecies {
    pub fn resolve(cfg: &ScenarioConfig) -> Result<Self> {
        let m = &cfg.models;
        let truth = match &m.truth {
            Preset::Default => reference::truth_curve(),
            Preset::Custom(k) => custom_curve("models.truth", "truth", k)?,
        };
        let model1 = match &m.model1 {
            Preset::Default => {
                let (r, k) = reference::model1_parameters(&truth, cfg.reward.delta)
                    .map_err(|e| Error::config("models.model1", format!("cannot derive model 1 from the truth: {e}")))?;
                GrowthCurve::gordon_schaefer("model1", r, k).map_err(|e| Error::config("models.model1", e.to_string()))?
            }
            Preset::Custom(k) => custom_curve("models.model1", "model1", k)?,
        };
        let model2 = match (&m.model2, &m.truth) {
            (Preset::Default, Preset::Default) => reference::model2().curve,
            (Preset::Default, Preset::Custom(_)) => {
                let fit = reference::fit_model2(&truth);
                GrowthCurve::gordon_schaefer("model2", fit.r, fit.k).map_err(|e| Error::config("models.model2", e.to_string()))?
            }
            (Preset::Custom(k), _) => custom_curve("models.model2", "model2", k)?,
        };
        let wrap = |c: GrowthCurve| StochasticModel::new(c, m.sigma);
        Ok(Self {
            truth: wrap(truth)?,
            model1: wrap(model1)?,
            model2: wrap(model2)?,
            states: cfg.grids.states()?,
            actions: cfg.grids.actions()?,
            reward: cfg.reward,
            opts: cfg.solver.options(),
            solved: Mutex::new(BTreeMap::new()),
        })
    }

    fn solve(&self, model: &StochasticModel, log: &dyn Fn(&str)) -> Result<Arc<Solved>> {
        if let Some(s) = self.solved.lock().expect("cache lock").get(model.label()) {
            return Ok(s.clone());
        }
        log(&format!("solving the harvest problem for {}", model.label()));
        let kernel = discretize_kernel(model, &self.states, &self.actions)?;
        let solution = value_iterate(&kernel, &self.reward, &self.states, &self.actions, &self.opts)?;
        if !solution.report.converged {
            return Err(Error::Numerical(format!(
                "value iteration for `{}` did not converge in {} sweeps (residual {:e})",
                model.label(),
                solution.report.iterations,
                solution.report.residual
            )));
        }
        let solved = Arc::new(Solved { kernel, solution });
        self.solved.lock().expect("cache lock").insert(model.label().to_string(), solved.clone());
        Ok(solved)
    }

    fn describe(&self) -> Value {
        json!([&self.model1, &self.model2, &self.truth])
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------- curves

pub fn run_curves(ss: &SingleSpecies, cfg: &ScenarioConfig, seed: u64, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let models = [&ss.model1, &ss.model2, &ss.truth];
    let n = cfg.curves.points;
    let top = ss.states.top();
    let mut curves = Vec::with_capacity(3 * n);
    for m in models {
        for i in 0..n {
            let x = top * i as f64 / (n - 1) as f64;
            let g = m.curve.growth(x)?;
            curves.push(CurveRow { model: m.label().to_string(), x, growth: g, net_growth: g - x });
        }
    }
    let mut policies = Vec::new();
    let mut per_model = Vec::new();
    let undiscounted = RewardSpec { price: ss.reward.price, delta: 1.0 };
    let finite = SolveOptions { horizon: Horizon::Finite(cfg.curves.finite_horizon), ..ss.opts };
    for m in models {
        let s = ss.solve(m, log)?;
        let pol = &s.solution.policy;
        let prof = escapement_profile(pol, &ss.states, &ss.actions);
        for (i, &a) in pol.0.iter().enumerate() {
            policies.push(PolicyRow {
                model: m.label().to_string(),
                state_index: i,
                state: ss.states.values()[i],
                action_index: a,
                quota: ss.actions.values()[a],
                escapement: prof.escapement[i],
                value: s.solution.value.0[i],
            });
        }
        let fh = value_iterate(&s.kernel, &undiscounted, &ss.states, &ss.actions, &finite)?;
        let fh_prof = escapement_profile(&fh.policy, &ss.states, &ss.actions);
        per_model.push(json!({
            "model": m.label(),
            "escapement": prof.level,
            "threshold_state": prof.threshold_state.map(|t| ss.states.values()[t]),
            "bang_bang": prof.bang_bang,
            "saturated_states": prof.saturated_states,
            "reed_escapement": reed_escapement(&m.curve, ss.reward.delta).ok(),
            "per_capita_root": per_capita_escapement_root(&m.curve, ss.reward.delta).ok(),
            "peak_net_growth": peak_net_growth(&m.curve),
            "undiscounted_finite_horizon_escapement": fh_prof.level,
            "iterations": s.solution.report.iterations,
            "residual": s.solution.report.residual,
        }));
    }
    let headline = curves_headline(&policies, &ss.states, &ss.actions)?;
    Ok(ScenarioOutput {
        scenario: Scenario::CurvesFig5,
        seed,
        files: vec![file("growth_curves.csv", to_csv(&curves)?), file("policies.csv", to_csv(&policies)?)],
        headline,
        details: json!({ "models": ss.describe(), "policies": per_model, "cell_width": ss.states.cell_width() }),
    })
}

fn policies_by_model(rows: &[PolicyRow]) -> BTreeMap<String, Policy> {
    let mut out: BTreeMap<String, Policy> = BTreeMap::new();
    for r in rows {
        out.entry(r.model.clone()).or_insert_with(|| Policy(Vec::new())).0.push(r.action_index);
    }
    out
}

fn curves_headline(rows: &[PolicyRow], states: &StateGrid, actions: &ActionGrid) -> Result<Headline> {
    let pols = policies_by_model(rows);
    let mut h = Headline::new();
    for (label, p) in &pols {
        if p.0.len() != states.len() || p.0.iter().any(|&a| a >= actions.len()) {
            return Err(Error::Integrity(format!("policy for `{label}` does not fit the configured grids")));
        }
        let prof = escapement_profile(p, states, actions);
        h.insert(format!("escapement.{label}"), prof.level.unwrap_or(f64::NAN));
        h.insert(format!("threshold_state.{label}"), prof.threshold_state.map(|t| states.values()[t]).unwrap_or(f64::NAN));
        h.insert(format!("bang_bang.{label}"), flag(prof.bang_bang));
    }
    if let Some(t) = pols.get("truth") {
        for other in ["model1", "model2"] {
            if let Some(p) = pols.get(other) {
                h.insert(format!("policy_gap.{other}_truth"), p.max_index_gap(t) as f64);
            }
        }
    }
    Ok(h)
}

pub fn recompute_curves(dir: &Path, cfg: &ScenarioConfig) -> Result<Headline> {
    curves_headline(&read_csv(&dir.join("policies.csv"))?, &cfg.grids.states()?, &cfg.grids.actions()?)
}

// ---------------------------------------------------------------- scores

const MODES: [&str; 2] = ["unfished", "managed"];

pub fn run_scores(ss: &SingleSpecies, cfg: &ScenarioConfig, seed: u64, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let ens = ModelEnsemble::new(vec![ss.model1.clone(), ss.model2.clone()])?;
    let managed = PolicyMode::Managed(vec![ss.solve(&ss.model1, log)?.solution.policy.clone(), ss.solve(&ss.model2, log)?.solution.policy.clone()]);
    let mut rows = Vec::new();
    let mut headline = Headline::new();
    let mut details = serde_json::Map::new();
    for (name, mode) in MODES.iter().zip([PolicyMode::Unfished, managed]) {
        log(&format!("scoring forecasts ({name})"));
        let spec = CampaignSpec { reps: cfg.reps, horizon: cfg.horizon, x0: cfg.x0, seed: stream_seed(seed, name) };
        let series = score_campaign(&ens, &ss.truth, &mode, &ss.states, &ss.actions, &spec)?;
        for s in &series {
            for st in &s.steps {
                rows.push(ScoreRow {
                    scenario: name.to_string(),
                    model: s.model.clone(),
                    replicate: s.replicate,
                    t: st.t,
                    state: st.state,
                    action: st.action,
                    observed_next: st.observed_next,
                    score: st.score,
                });
            }
        }
        headline.extend(scores_headline(name, &series, seed)?);
        details.insert(name.to_string(), json!(summarize_scores(&series)));
    }
    details.insert("models".into(), ss.describe());
    Ok(ScenarioOutput { scenario: Scenario::ScoresFig2, seed, files: vec![file("scores.csv", to_csv(&rows)?)], headline, details: Value::Object(details) })
}

fn scores_headline(mode: &str, series: &[ScoreSeries], seed: u64) -> Result<Headline> {
    let mut h = Headline::new();
    let sums = summarize_scores(series);
    for s in &sums {
        h.insert(format!("mean_score.{mode}.{}", s.model), s.mean_score);
        h.insert(format!("neg_inf_count.{mode}.{}", s.model), s.neg_inf_count as f64);
    }
    let mean = |label: &str| sums.iter().find(|s| s.model == label).map(|s| s.mean_score);
    if let (Some(m1), Some(m2)) = (mean("model1"), mean("model2")) {
        h.insert(format!("score_gap.{mode}"), m2 - m1);
        let ci = score_difference_ci(series, "model2", "model1", stream_seed(seed, &format!("score_gap.{mode}")))?;
        h.insert(format!("score_gap_ci_low.{mode}"), ci.low);
        h.insert(format!("score_gap_ci_high.{mode}"), ci.high);
    }
    Ok(h)
}

pub fn recompute_scores(dir: &Path, seed: u64) -> Result<Headline> {
    let rows: Vec<ScoreRow> = read_csv(&dir.join("scores.csv"))?;
    let mut h = Headline::new();
    for mode in MODES {
        let mut series: Vec<ScoreSeries> = Vec::new();
        for r in rows.iter().filter(|r| r.scenario == mode) {
            let step = ScoreStep {
                t: r.t,
                state: r.state,
                action: r.action,
                harvest: 0.0,
                observed_next: r.observed_next,
                score: r.score,
                above_grid: false,
            };
            match series.last_mut() {
                Some(s) if s.model == r.model && s.replicate == r.replicate => s.steps.push(step),
                _ => series.push(ScoreSeries { model: r.model.clone(), replicate: r.replicate, steps: vec![step] }),
            }
        }
        h.extend(scores_headline(mode, &series, seed)?);
    }
    Ok(h)
}

// ---------------------------------------------------------------- outcomes

pub fn run_outcomes(ss: &SingleSpecies, cfg: &ScenarioConfig, seed: u64, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let regimes: Vec<(String, Policy)> = [&ss.model1, &ss.model2, &ss.truth]
        .iter()
        .map(|m| Ok((m.label().to_string(), ss.solve(m, log)?.solution.policy.clone())))
        .collect::<Result<_>>()?;
    log("managing the truth with each policy");
    let spec = CampaignSpec { reps: cfg.reps, horizon: cfg.horizon, x0: cfg.x0, seed: stream_seed(seed, "outcomes") };
    let runs = managed_runs(&ss.truth, &regimes, &ss.states, &ss.actions, &ss.reward, &spec)?;
    let rows: Vec<OutcomeRow> = runs
        .iter()
        .flat_map(|r| {
            r.steps.iter().map(move |s| OutcomeRow {
                model: r.model.clone(),
                replicate: r.replicate,
                t: s.t,
                state: s.state,
                quota: s.quota,
                harvest: s.harvest,
                reward: s.reward,
                next_state: s.next_state,
            })
        })
        .collect();
    let headline = outcomes_headline(&runs, seed)?;
    Ok(ScenarioOutput {
        scenario: Scenario::OutcomesFig3,
        seed,
        files: vec![file("outcomes.csv", to_csv(&rows)?)],
        headline,
        details: json!({ "models": ss.describe(), "regimes": summarize_regimes(&runs) }),
    })
}

fn outcomes_headline(runs: &[ManagedRun], seed: u64) -> Result<Headline> {
    let mut h = Headline::new();
    for s in summarize_regimes(runs) {
        h.insert(format!("mean_stock.{}", s.model), s.mean_stock);
        h.insert(format!("npv.{}", s.model), s.npv);
    }
    let c = compare_regimes(runs, "model1", "model2", stream_seed(seed, "compare"))?;
    h.insert("stock_diff.model1_model2".into(), c.stock_difference);
    h.insert("stock_diff_ci_low.model1_model2".into(), c.stock_ci.low);
    h.insert("stock_diff_ci_high.model1_model2".into(), c.stock_ci.high);
    h.insert("npv_diff.model1_model2".into(), c.npv_difference);
    h.insert("npv_diff_ci_low.model1_model2".into(), c.npv_ci.low);
    h.insert("npv_diff_ci_high.model1_model2".into(), c.npv_ci.high);
    Ok(h)
}

pub fn recompute_outcomes(dir: &Path, cfg: &ScenarioConfig, seed: u64) -> Result<Headline> {
    let rows: Vec<OutcomeRow> = read_csv(&dir.join("outcomes.csv"))?;
    let mut runs: Vec<ManagedRun> = Vec::new();
    for r in rows {
        let step = ManagedStep { t: r.t, state: r.state, quota: r.quota, harvest: r.harvest, reward: r.reward, next_state: r.next_state };
        match runs.last_mut() {
            Some(run) if run.model == r.model && run.replicate == r.replicate => run.steps.push(step),
            _ => runs.push(ManagedRun { model: r.model, replicate: r.replicate, steps: vec![step], npv: 0.0, mean_stock: 0.0 }),
        }
    }
    for run in &mut runs {
        run.npv = discounted_sum(run.steps.iter().map(|s| s.reward), cfg.reward.delta);
        run.mean_stock = stats::mean(&run.steps.iter().map(|s| s.next_state).collect::<Vec<_>>());
    }
    outcomes_headline(&runs, seed)
}

// ---------------------------------------------------------------- adaptive

const ENSEMBLES: [&str; 2] = ["2", "42"];

fn forty_two(ss: &SingleSpecies, cfg: &ScenarioConfig) -> Result<ModelEnsemble> {
    let CurveKind::GordonSchaefer { r, k } = *ss.model1.curve.kind() else {
        return Err(Error::config("models.model1", "model 1 must be gordon_schaefer to join the ensemble grid"));
    };
    let a = &cfg.adaptive;
    let mut ens = gordon_schaefer_ensemble(&a.ensemble_r, &a.ensemble_k, ss.model1.sigma)
        .map_err(|e| Error::config("adaptive.ensemble_r", e.to_string()))?;
    ens.replace(reference::nearest_member(&a.ensemble_r, &a.ensemble_k, r, k), ss.model1.clone())?;
    Ok(ens)
}

pub fn run_adaptive(ss: &SingleSpecies, cfg: &ScenarioConfig, seed: u64, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let mut files = Vec::new();
    let mut headline = Headline::new();
    let mut details = serde_json::Map::new();
    for tag in ENSEMBLES {
        let ens = match tag {
            "2" => ModelEnsemble::new(vec![ss.model1.clone(), ss.model2.clone()])?,
            _ => forty_two(ss, cfg)?,
        };
        log(&format!("building {} member kernels", ens.len()));
        let kernels = EnsembleKernels::build(&ens, &ss.states, &ss.actions)?;
        let i1 = ens.index_of("model1").expect("model1 is in both ensembles");
        let prior = Belief::concentrated(ens.len(), i1, cfg.adaptive.prior_mass)?;
        let spec = AdaptiveSpec { horizon: cfg.horizon, x0: cfg.x0, seed: stream_seed(seed, &format!("voi_{tag}")) };
        log(&format!("running {} learning/planning replicate pairs on the {tag}-model ensemble", cfg.reps));
        let study = value_of_information(&ss.truth, &kernels, &prior, cfg.reps, &ss.reward, &spec)?;
        let labels = ens.labels();
        let mut rows = Vec::new();
        for run in study.learning.iter().chain(&study.planning) {
            push_adaptive_rows(&mut rows, run, &labels, i1);
        }
        let r = &study.report;
        let voi = VoiFile {
            voi: r.voi,
            relative_voi: r.relative_voi,
            ci_low: r.ci.low,
            ci_high: r.ci.high,
            relative_ci_low: r.relative_ci.low,
            relative_ci_high: r.relative_ci.high,
            npv_learning: r.npv_learning,
            npv_planning: r.npv_planning,
            reps: r.reps,
            horizon: r.horizon,
        };
        files.push(file(&format!("adaptive_{tag}.csv"), to_csv(&rows)?));
        files.push(file(&format!("voi_{tag}.json"), pretty(&voi)?));
        headline.extend(adaptive_headline(tag, &rows, cfg, spec.seed)?);
        details.insert(
            format!("ensemble_{tag}"),
            json!({
                "members": labels,
                "prior_on_model1": cfg.adaptive.prior_mass,
                "first_update_share_model2": (tag == "2").then(|| study.first_update_share(1, 0.5)),
            }),
        );
    }
    details.insert("models".into(), ss.describe());
    Ok(ScenarioOutput { scenario: Scenario::AdaptiveFig4, seed, files, headline, details: Value::Object(details) })
}

fn push_adaptive_rows(rows: &mut Vec<AdaptiveRow>, run: &AdaptiveRun, labels: &[String], i1: usize) {
    for s in &run.steps {
        let top = Belief::new(s.belief.clone()).map(|b| b.top()).unwrap_or(0);
        rows.push(AdaptiveRow {
            mode: run.mode.as_str().to_string(),
            replicate: run.replicate,
            t: s.t,
            state: s.state,
            quota: s.quota,
            harvest: s.harvest,
            reward: s.reward,
            belief_model1: s.belief[i1],
            belief_top_label: labels[top].clone(),
            belief_top_weight: s.belief[top],
        });
    }
}

fn adaptive_headline(tag: &str, rows: &[AdaptiveRow], cfg: &ScenarioConfig, seed: u64) -> Result<Headline> {
    let mut npv: BTreeMap<&str, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for r in rows {
        let runs = npv.entry(r.mode.as_str()).or_default();
        match runs.last_mut() {
            Some((rep, rewards)) if *rep == r.replicate => rewards.push(r.reward),
            _ => runs.push((r.replicate, vec![r.reward])),
        }
    }
    let totals = |mode: &str| -> Vec<f64> {
        npv.get(mode).map(|v| v.iter().map(|(_, rw)| discounted_sum(rw.iter().copied(), cfg.reward.delta)).collect()).unwrap_or_default()
    };
    let report = voi_from_npvs(&totals("learning"), &totals("planning"), cfg.horizon, seed)?;
    let first: Vec<&AdaptiveRow> = rows.iter().filter(|r| r.mode == "learning" && r.t == 0).collect();
    let switched = first.iter().filter(|r| r.belief_model1 < 0.5).count() as f64 / first.len().max(1) as f64;
    let mut h = Headline::new();
    for (k, v) in [
        ("voi", report.voi),
        ("relative_voi", report.relative_voi),
        ("ci_low", report.ci.low),
        ("ci_high", report.ci.high),
        ("relative_ci_low", report.relative_ci.low),
        ("relative_ci_high", report.relative_ci.high),
        ("npv_learning", report.npv_learning),
        ("npv_planning", report.npv_planning),
        ("first_update_off_model1_share", switched),
    ] {
        h.insert(format!("{k}.{tag}"), v);
    }
    Ok(h)
}

pub fn recompute_adaptive(dir: &Path, cfg: &ScenarioConfig, seed: u64) -> Result<Headline> {
    let mut h = Headline::new();
    for tag in ENSEMBLES {
        let rows: Vec<AdaptiveRow> = read_csv(&dir.join(format!("adaptive_{tag}.csv")))?;
        h.extend(adaptive_headline(tag, &rows, cfg, stream_seed(seed, &format!("voi_{tag}")))?);
    }
    Ok(h)
}

// ---------------------------------------------------------------- ecosystem

fn food_web(cfg: &ScenarioConfig) -> Result<(FoodWeb, CandidateEcoModel, CandidateEcoModel)> {
    let e = &cfg.ecosystem;
    let truth = match &e.truth {
        Preset::Default => FoodWeb::reference(),
        Preset::Custom(c) => {
            let x0 = match &c.x0 {
                Some(x) => x.clone(),
                None => c.system.equilibrium().map_err(|e| Error::config("ecosystem.truth", e.to_string()))?,
            };
            FoodWeb::new(c.system.clone(), x0).map_err(|e| Error::config("ecosystem.truth", e.to_string()))?
        }
    };
    let cand = |key: &str, p: &Preset<crate::ecosystem::RickerSystem>, s: Structure| -> Result<CandidateEcoModel> {
        match p {
            Preset::Default => Ok(match s {
                Structure::A => CandidateEcoModel::reference_a(),
                Structure::B => CandidateEcoModel::reference_b(),
            }),
            Preset::Custom(sys) => CandidateEcoModel::new(s, sys.clone()).map_err(|e| Error::config(key, e.to_string())),
        }
    };
    Ok((truth, cand("ecosystem.model_a", &e.model_a, Structure::A)?, cand("ecosystem.model_b", &e.model_b, Structure::B)?))
}

fn trajectory_rows(rows: &mut Vec<TrajectoryRow>, model: &str, trajectories: &[Trajectory]) {
    for (rep, tr) in trajectories.iter().enumerate() {
        for (t, s) in tr.states.iter().enumerate() {
            let h = tr.harvests.get(t);
            rows.push(TrajectoryRow {
                scenario: Scenario::EcosystemFig1.name().to_string(),
                model: model.to_string(),
                replicate: rep,
                t,
                bass: s[BASS],
                cormorant: s[CORMORANT],
                h1: s[2],
                h2: s[3],
                h3: s[4],
                harvest_bass: h.map(|h| h.bass),
                harvest_herring: h.map(|h| h.herring),
                utility: tr.utilities.get(t).copied(),
            });
        }
    }
}

fn band_rows(rows: &mut Vec<BandRow>, efforts: &str, fan: &ForecastFan) {
    for (t, (b, c)) in fan.bass.iter().zip(&fan.cormorant).enumerate() {
        rows.push(BandRow {
            model: fan.model.clone(),
            efforts: efforts.to_string(),
            t,
            b_med: b.median,
            b_lo: b.lo,
            b_hi: b.hi,
            c_med: c.median,
            c_lo: c.lo,
            c_hi: c.hi,
            b_mean: b.mean,
            c_mean: c.mean,
        });
    }
}

pub fn run_ecosystem(cfg: &ScenarioConfig, seed: u64, log: &dyn Fn(&str)) -> Result<ScenarioOutput> {
    let (truth, a, b) = food_web(cfg)?;
    if truth.system.dim() != 5 {
        return Err(Error::config("ecosystem.truth", "the food web must have five species"));
    }
    let e = &cfg.ecosystem;
    let settings = TrapSettings {
        grid: EffortGrid::uniform(e.effort_points)?,
        horizon: e.horizon,
        reps: e.reps,
        delta: e.delta,
        history: e.history,
        seed,
    };
    log("optimizing fixed efforts for the truth and both candidates");
    let study = run_trap_study(&truth, &[a, b], &settings)?;
    let history: Vec<HistoryRow> = study
        .history
        .iter()
        .enumerate()
        .map(|(t, s)| HistoryRow { t, bass: s[BASS], cormorant: s[CORMORANT], h1: s[2], h2: s[3], h3: s[4] })
        .collect();
    let mut traj = Vec::new();
    trajectory_rows(&mut traj, "truth", &study.truth_regime.trajectories);
    let mut bands = Vec::new();
    let surface = |rows: &mut Vec<SurfaceRow>, model: &str, s: &[(crate::ecosystem::EffortPolicy, f64)]| {
        rows.extend(s.iter().map(|(p, v)| SurfaceRow { model: model.to_string(), effort_bass: p.effort_bass, effort_herring: p.effort_herring, value: *v }));
    };
    let mut surfaces = Vec::new();
    surface(&mut surfaces, "truth", &study.truth_optimum.surface);
    let mut headline = Headline::new();
    headline.insert("mean_utility.truth".into(), study.truth_regime.mean_utility);
    let mut cands = Vec::new();
    for c in &study.candidates {
        trajectory_rows(&mut traj, &c.label, &c.realized.trajectories);
        band_rows(&mut bands, "own", &c.fan);
        band_rows(&mut bands, "truth_optimum", &c.fan_at_truth_optimum);
        surface(&mut surfaces, &c.label, &c.optimum.surface);
        headline.insert(format!("mean_utility.{}", c.label), c.realized.mean_utility);
        headline.insert(format!("utility_ratio.{}", c.label), c.realized.utility_ratio);
        headline.insert(format!("rmse.{}", c.label), c.rmse);
        headline.insert(format!("rmse_at_truth_optimum.{}", c.label), c.rmse_at_truth_optimum);
        cands.push(json!({
            "model": c.label,
            "efforts": c.optimum.efforts,
            "predicted_value": c.optimum.value,
            "realized_utility": c.realized.mean_utility,
            "utility_ratio": c.realized.utility_ratio,
            "rmse": c.rmse,
            "rmse_at_truth_optimum": c.rmse_at_truth_optimum,
        }));
    }
    Ok(ScenarioOutput {
        scenario: Scenario::EcosystemFig1,
        seed,
        files: vec![
            file("eco_history.csv", to_csv(&history)?),
            file("trajectories.csv", to_csv(&traj)?),
            file("forecast_bands.csv", to_csv(&bands)?),
            file("effort_surfaces.csv", to_csv(&surfaces)?),
        ],
        headline,
        details: json!({
            "utility": study.spec,
            "truth_efforts": study.truth_optimum.efforts,
            "truth_value": study.truth_optimum.value,
            "candidates": cands,
        }),
    })
}

pub fn recompute_ecosystem(dir: &Path, cfg: &ScenarioConfig) -> Result<Headline> {
    let traj: Vec<TrajectoryRow> = read_csv(&dir.join("trajectories.csv"))?;
    let bands: Vec<BandRow> = read_csv(&dir.join("forecast_bands.csv"))?;
    let delta = cfg.ecosystem.delta;
    let mut order: Vec<String> = Vec::new();
    // model -> replicate -> rows
    let mut by_model: BTreeMap<String, BTreeMap<usize, Vec<&TrajectoryRow>>> = BTreeMap::new();
    for r in &traj {
        if !order.contains(&r.model) {
            order.push(r.model.clone());
        }
        by_model.entry(r.model.clone()).or_default().entry(r.replicate).or_default().push(r);
    }
    let mean_utility = |model: &str| -> f64 {
        let reps = &by_model[model];
        let total: f64 = reps.values().map(|rows| discounted_sum(rows.iter().filter_map(|r| r.utility), delta)).sum();
        total / reps.len() as f64
    };
    let mean_path = |model: &str| -> Vec<(f64, f64)> {
        let reps = &by_model[model];
        let n = reps.values().next().map_or(0, |v| v.len());
        (0..n)
            .map(|t| {
                let k = reps.len() as f64;
                (reps.values().map(|v| v[t].bass).sum::<f64>() / k, reps.values().map(|v| v[t].cormorant).sum::<f64>() / k)
            })
            .collect()
    };
    let rmse = |model: &str, efforts: &str, against: &str| -> Result<f64> {
        let fan: Vec<&BandRow> = bands.iter().filter(|b| b.model == model && b.efforts == efforts).collect();
        let truth = mean_path(against);
        if fan.len() != truth.len() || fan.len() < 2 {
            return Err(Error::Integrity(format!("forecast bands for `{model}` do not match the trajectories")));
        }
        let horizon = fan.len() - 1;
        let ss: f64 = (1..=horizon).map(|t| (fan[t].b_mean - truth[t].0).powi(2) + (fan[t].c_mean - truth[t].1).powi(2)).sum();
        Ok((ss / (2 * horizon) as f64).sqrt())
    };
    if !by_model.contains_key("truth") {
        return Err(Error::Integrity("trajectories.csv has no truth regime".into()));
    }
    let mut h = Headline::new();
    let truth_mean = mean_utility("truth");
    h.insert("mean_utility.truth".into(), truth_mean);
    for m in order.iter().filter(|m| *m != "truth") {
        let mu = mean_utility(m);
        h.insert(format!("mean_utility.{m}"), mu);
        h.insert(format!("utility_ratio.{m}"), mu / truth_mean);
        h.insert(format!("rmse.{m}"), rmse(m, "own", m)?);
        h.insert(format!("rmse_at_truth_optimum.{m}"), rmse(m, "truth_optimum", "truth")?);
    }
    Ok(h)
}

pub fn pretty<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
