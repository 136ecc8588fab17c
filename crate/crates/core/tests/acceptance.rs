//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use ftlab::adaptive::{update_belief, update_with_likelihoods, Belief};
use ftlab::growth::ModelEnsemble;
use ftlab::harness::{run_scenario, summarize, Headline, Scenario, ScenarioConfig};
use ftlab::mdp::{
    discretize_kernel, escapement_profile, reed_escapement, solve_value_iteration, value_iterate, Horizon, RewardSpec,
    RewardTable, SolveOptions, TransitionKernel,
};
use ftlab::reference;
use ftlab::rng::rng_from_seed;
use ftlab::scoring::{one_step_forecast, propriety_check};
use rand::Rng;

struct Outcome {
    name: &'static str,
    checks: Vec<(String, bool)>,
    elapsed: Duration,
}

impl Outcome {
    fn new(name: &'static str) -> Self {
        Self { name, checks: Vec::new(), elapsed: Duration::ZERO }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    fn report(&self) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let failed: Vec<&str> = self.checks.iter().filter(|(_, ok)| !ok).map(|(w, _)| w.as_str()).collect();
        let detail = if failed.is_empty() {
            self.checks.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>().join("; ")
        } else {
            format!("failed: {}", failed.join("; "))
        };
        // Uncaptured.
        let line = format!("{verdict} {} ({:.1}s): {detail}\n", self.name, self.elapsed.as_secs_f64());
        let _ = std::io::stderr().write_all(line.as_bytes());
    }
}

fn default_run(scenario: Scenario, dir: &Path) -> (Headline, Duration) {
    let mut cfg = ScenarioConfig::new(scenario, 20240601);
    cfg.output = dir.to_path_buf();
    let start = Instant::now();
    let report = run_scenario(&cfg, &|_| {}).expect("scenario runs");
    let elapsed = start.elapsed();
    summarize(dir).expect("fresh run verifies");
    (report.headline[scenario.name()].clone(), elapsed)
}

fn forecast_skill(tmp: &Path) -> Outcome {
    let mut o = Outcome::new("forecast-skill ordering");
    let (h, elapsed) = default_run(Scenario::ScoresFig2, &tmp.join("scores"));
    o.elapsed = elapsed;
    for mode in ["unfished", "managed"] {
        let (m1, m2) = (h[&format!("mean_score.{mode}.model1")], h[&format!("mean_score.{mode}.model2")]);
        let lo = h[&format!("score_gap_ci_low.{mode}")];
        o.check(format!("{mode}: model2 {m2:.3} > model1 {m1:.3}"), m2 > m1);
        o.check(format!("{mode}: gap CI low {lo:.3} > 0"), lo > 0.0);
    }
    o.check(format!("runtime {:.1}s < 120s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(120));
    o
}

fn outcome_reversal(tmp: &Path) -> Outcome {
    let mut o = Outcome::new("outcome reversal");
    let (h, elapsed) = default_run(Scenario::OutcomesFig3, &tmp.join("outcomes"));
    o.elapsed = elapsed;
    let (s1, s2) = (h["mean_stock.model1"], h["mean_stock.model2"]);
    let (n1, n2) = (h["npv.model1"], h["npv.model2"]);
    o.check(format!("stock {s1:.4} > {s2:.4}"), s1 > s2);
    o.check(format!("stock diff CI low {:.4} > 0", h["stock_diff_ci_low.model1_model2"]), h["stock_diff_ci_low.model1_model2"] > 0.0);
    o.check(format!("NPV {n1:.3} > {n2:.3}"), n1 > n2);
    o.check(format!("NPV diff CI low {:.4} > 0", h["npv_diff_ci_low.model1_model2"]), h["npv_diff_ci_low.model1_model2"] > 0.0);
    o.check(format!("runtime {:.1}s < 120s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(120));
    o
}

fn bang_bang() -> Outcome {
    let mut o = Outcome::new("bang-bang and analytic escapement");
    let start = Instant::now();
    let (states, actions, reward) = (reference::state_grid(), reference::action_grid(), reference::reward());
    let cell = states.cell_width();
    let mut policies = Vec::new();
    let mut levels = Vec::new();
    for m in reference::zoo().iter() {
        let k = discretize_kernel(m, &states, &actions).unwrap();
        let sol = value_iterate(&k, &reward, &states, &actions, &SolveOptions::default()).unwrap();
        let prof = escapement_profile(&sol.policy, &states, &actions);
        let finite = SolveOptions { horizon: Horizon::Finite(50), ..SolveOptions::default() };
        let undiscounted = RewardSpec { price: 1.0, delta: 1.0 };
        let fh = value_iterate(&k, &undiscounted, &states, &actions, &finite).unwrap();
        let fh_level = escapement_profile(&fh.policy, &states, &actions).level.unwrap();
        let reed = reed_escapement(&m.curve, 1.0).unwrap();
        o.check(
            format!("{}: delta=1 escapement {fh_level:.4} vs analytic {reed:.4} within {cell:.4}", m.label()),
            (fh_level - reed).abs() <= cell,
        );
        if m.label() == "truth" {
            o.check(format!("truth policy constant-escapement above threshold (level {:.4})", prof.level.unwrap()), prof.bang_bang);
        }
        levels.push(prof.level.unwrap());
        policies.push(sol.policy);
    }
    let gap = policies[0].max_index_gap(&policies[2]);
    o.check(format!("model1 vs truth action gap {gap} <= 1 at every state"), gap <= 1);
    o.check(format!("model2 escapement {:.4} < model1 {:.4}", levels[1], levels[0]), levels[1] < levels[0]);
    o.check(format!("model2 escapement {:.4} < truth {:.4}", levels[1], levels[2]), levels[1] < levels[2]);
    o.elapsed = start.elapsed();
    o
}

fn negative_voi(tmp: &Path) -> Outcome {
    let mut o = Outcome::new("negative value of information");
    let (h, elapsed) = default_run(Scenario::AdaptiveFig4, &tmp.join("adaptive"));
    o.elapsed = elapsed;
    let (r2, r42) = (h["relative_voi.2"], h["relative_voi.42"]);
    o.check(format!("2-model relative VOI {r2:.4} < 0"), r2 < 0.0);
    o.check(
        format!("2-model CI [{:.4}, {:.4}] excludes 0", h["relative_ci_low.2"], h["relative_ci_high.2"]),
        h["relative_ci_high.2"] < 0.0 && h["ci_high.2"] < 0.0,
    );
    o.check(format!("42-model relative VOI {r42:.4} < 0"), r42 < 0.0);
    o.check(format!("42-model {r42:.4} > 2-model {r2:.4}"), r42 > r2);
    let share = h["first_update_off_model1_share.2"];
    o.check(format!("belief on model2 > 0.5 after first update in {:.0}% of runs", 100.0 * share), share > 0.5);
    o.check(format!("runtime {:.1}s < 300s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(300));
    o
}

fn ecosystem_trap(tmp: &Path) -> Outcome {
    let mut o = Outcome::new("ecosystem trap");
    let (h, elapsed) = default_run(Scenario::EcosystemFig1, &tmp.join("ecosystem"));
    o.elapsed = elapsed;
    let (ea, eb) = (h["rmse.model_A"], h["rmse.model_B"]);
    let (ua, ub) = (h["utility_ratio.model_A"], h["utility_ratio.model_B"]);
    o.check(format!("RMSE A {ea:.4} < B {eb:.4}"), ea < eb);
    o.check(format!("utility ratio A {ua:.3} < B {ub:.3}"), ua < ub);
    o.check(format!("utility ratio B {ub:.3} >= 0.9"), ub >= 0.9);
    o.check(format!("runtime {:.1}s < 300s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(300));
    o
}

/// Exact policy evaluation by Gauss-Jordan elimination on `(I - delta P) v = r`.
fn evaluate(p: &[Vec<f64>], r: &[f64], delta: f64) -> Vec<f64> {
    let n = r.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| f64::from(u8::from(i == j)) - delta * p[i][j]).collect();
            row.push(r[i]);
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for i in 0..n {
            if i != c {
                let f = m[i][c] / m[c][c];
                for j in c..=n {
                    m[i][j] -= f * m[c][j];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

fn random_mdp_oracle() -> (usize, usize) {
    let mut rng = rng_from_seed(2718);
    let mut ok = 0;
    for _ in 0..100 {
        let ns = rng.random_range(1..=4usize);
        let na = rng.random_range(1..=3usize);
        let delta = rng.random_range(0.5..0.95);
        let mut probs = Vec::with_capacity(na * ns * ns);
        for _ in 0..na * ns {
            let w: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            probs.extend(w.iter().map(|x| x / s));
        }
        let rewards: Vec<f64> = (0..na * ns).map(|_| rng.random_range(0.0..10.0)).collect();
        let kernel = TransitionKernel::from_dense(na, ns, probs.clone()).unwrap();
        let table = RewardTable::from_fn(na, ns, |a, x| rewards[a * ns + x]);
        let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
        let sol = solve_value_iteration(&kernel, &table, delta, &opts, None).unwrap();
        // Enumerate every deterministic policy.
        let mut best = vec![f64::NEG_INFINITY; ns];
        for code in 0..na.pow(ns as u32) {
            let pol: Vec<usize> = (0..ns).map(|x| code / na.pow(x as u32) % na).collect();
            let p: Vec<Vec<f64>> = (0..ns).map(|x| probs[(pol[x] * ns + x) * ns..(pol[x] * ns + x + 1) * ns].to_vec()).collect();
            let r: Vec<f64> = (0..ns).map(|x| rewards[pol[x] * ns + x]).collect();
            for (b, v) in best.iter_mut().zip(evaluate(&p, &r, delta)) {
                *b = b.max(v);
            }
        }
        let greedy: Vec<usize> = (0..ns)
            .map(|x| {
                let q: Vec<f64> = (0..na)
                    .map(|a| rewards[a * ns + x] + delta * (0..ns).map(|j| probs[(a * ns + x) * ns + j] * best[j]).sum::<f64>())
                    .collect();
                let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                q.iter().position(|&v| v >= top - 1e-10 * top.abs().max(1.0)).unwrap()
            })
            .collect();
        let value_ok = sol.value.0.iter().zip(&best).all(|(a, b)| (a - b).abs() <= 1e-8);
        if value_ok && sol.policy.0 == greedy {
            ok += 1;
        }
    }
    (ok, 100)
}

/// Simpson integral of the lognormal density over `[a, b]` in log space.
fn lognormal_mass(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let (la, lb) = (a.max(1e-300).ln().max(mu - 12.0 * sigma), b.ln().min(mu + 12.0 * sigma));
    if lb <= la {
        return 0.0;
    }
    let n = 2000;
    let h = (lb - la) / n as f64;
    let f = |y: f64| (-(y - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut s = f(la) + f(lb);
    for i in 1..n {
        s += f(la + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn kernel_quadrature_gap() -> f64 {
    let states = reference::state_grid();
    let truth = reference::truth();
    let edges = states.edges();
    let mut worst = 0.0f64;
    for (x, quota) in [(0.3, 0.0), (1.0, 0.4), (1.7, 0.1), (0.05, 0.0), (2.4, 1.2)] {
        let f = one_step_forecast(&truth, x, quota, &states).unwrap();
        let esc = (states.values()[states.bin_of(x)] - quota).max(0.0);
        let mean = truth.curve.growth(esc).unwrap();
        let mu = mean.ln() - 0.5 * truth.sigma * truth.sigma;
        for (j, p) in f.probabilities.iter().enumerate() {
            let lo = if j == 0 { 0.0 } else { edges[j - 1] };
            let hi = if j == states.len() - 1 { f64::INFINITY } else { edges[j] };
            worst = worst.max((p - lognormal_mass(mu, truth.sigma, lo, hi)).abs());
        }
    }
    worst
}

fn bayes_gap() -> f64 {
    let prior = Belief::new(vec![0.5, 0.3, 0.2]).unwrap();
    let post = update_with_likelihoods(&prior, &[0.1, 0.4, 0.25]).unwrap().belief;
    // 0.05, 0.12, 0.05 over 0.22.
    let hand = [5.0 / 22.0, 12.0 / 22.0, 5.0 / 22.0];
    let mut worst = post.weights().iter().zip(hand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let prior = Belief::new(vec![0.99, 0.01]).unwrap();
    let post = update_with_likelihoods(&prior, &[0.02, 0.6]).unwrap().belief;
    let hand = [0.0198 / 0.0258, 0.006 / 0.0258];
    worst = worst.max(post.weights().iter().zip(hand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    // Through the ensemble path: likelihoods are forecast probabilities of the observed bin.
    let states = reference::state_grid();
    let ens = reference::two_model_ensemble();
    let post = update_belief(&prior, &ens, 1.0, 0.3, 0.8, &states).unwrap().belief;
    let l: Vec<f64> = ens
        .iter()
        .map(|m| one_step_forecast(m, 1.0, 0.3, &states).unwrap().probabilities[states.bin_of(0.8)])
        .collect();
    let z = 0.99 * l[0] + 0.01 * l[1];
    let hand = [0.99 * l[0] / z, 0.01 * l[1] / z];
    worst.max(post.weights().iter().zip(hand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn oracles() -> Outcome {
    let mut o = Outcome::new("oracle suites");
    let start = Instant::now();
    let (ok, n) = random_mdp_oracle();
    o.check(format!("{ok}/{n} random MDPs match enumeration (1e-8, same policy)"), ok == n);
    let q = kernel_quadrature_gap();
    o.check(format!("kernel rows vs quadrature max gap {q:.2e} <= 1e-6"), q <= 1e-6);
    let b = bayes_gap();
    o.check(format!("Bayes updates vs hand arithmetic max gap {b:.2e} <= 1e-12"), b <= 1e-12);
    let zoo: ModelEnsemble = reference::zoo();
    let states = reference::state_grid();
    let mut pairs = 0;
    let mut held = 0;
    for (i, p) in zoo.iter().enumerate() {
        for (j, q) in zoo.iter().enumerate() {
            if i != j {
                let c = propriety_check(p, q, &states, (0.05, 1.6), 10_000, 31 + (i * 3 + j) as u64).unwrap();
                pairs += 1;
                held += usize::from(c.holds());
            }
        }
    }
    o.check(format!("propriety holds for {held}/{pairs} ordered zoo pairs (1e4 samples, 95%)"), held == pairs);
    o.elapsed = start.elapsed();
    o
}

fn small_config(dir: &Path) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Scenario::All, 77);
    cfg.output = dir.to_path_buf();
    cfg.reps = 4;
    cfg.horizon = 15;
    cfg.grids.state_points = 61;
    cfg.grids.action_points = 41;
    cfg.curves.points = 50;
    cfg.ecosystem.effort_points = 5;
    cfg.ecosystem.reps = 6;
    cfg.ecosystem.horizon = 10;
    cfg
}

fn determinism(tmp: &Path) -> Outcome {
    let mut o = Outcome::new("determinism");
    let start = Instant::now();
    let (a, b) = (tmp.join("det_a"), tmp.join("det_b"));
    let ra = run_scenario(&small_config(&a), &|_| {}).unwrap();
    let rb = run_scenario(&small_config(&b), &|_| {}).unwrap();
    o.check(format!("{} manifest checksums identical", ra.manifest.files.len()), ra.manifest.files == rb.manifest.files);
    let csvs: Vec<&str> = ra.manifest.files.iter().map(|f| f.name.as_str()).filter(|n| n.ends_with(".csv")).collect();
    let same = csvs.iter().all(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap());
    o.check(format!("{} CSVs byte-identical", csvs.len()), same);
    o.elapsed = start.elapsed();
    o
}

#[test]
fn acceptance_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let results = vec![
        forecast_skill(tmp.path()),
        outcome_reversal(tmp.path()),
        bang_bang(),
        negative_voi(tmp.path()),
        ecosystem_trap(tmp.path()),
        oracles(),
        determinism(tmp.path()),
    ];
    for r in &results {
        r.report();
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
