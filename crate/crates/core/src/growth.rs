//! Single-species stochastic population models.
//!
//! A [`GrowthCurve`] maps this season's escapement to next season's expected
//! biomass. A [`StochasticModel`] adds a mean-one lognormal shock, and a
//! [`ModelEnsemble`] is an ordered, uniquely labelled set of models.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric family (or table) behind a growth curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveKind {
    /// Logistic surplus production: `x + r x (1 - x/K)`, floored at zero.
    GordonSchaefer {
        r: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    /// Right-skewed Ricker-type curve: `x exp(r (1 - x/K) (x + c) / K)`.
    ///
    /// Net growth peaks above `K/2` and per-capita growth stays positive at
    /// low density.
    SkewedTrue {
        r: f64,
        #[serde(rename = "K")]
        k: f64,
        c: f64,
    },
    /// Piecewise-linear table of `(x, growth(x))`, constant past the last point.
    Tabulated { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    label: String,
    kind: CurveKind,
}

impl GrowthCurve {
    pub fn new(label: impl Into<String>, kind: CurveKind) -> Result<Self> {
        let label = label.into();
        validate_kind(&label, &kind)?;
        Ok(Self { label, kind })
    }

    pub fn gordon_schaefer(label: impl Into<String>, r: f64, k: f64) -> Result<Self> {
        Self::new(label, CurveKind::GordonSchaefer { r, k })
    }

    pub fn skewed_true(label: impl Into<String>, r: f64, k: f64, c: f64) -> Result<Self> {
        Self::new(label, CurveKind::SkewedTrue { r, k, c })
    }

    pub fn tabulated(label: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(label, CurveKind::Tabulated { points })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Characteristic biomass scale: `K` for parametric families, the last
    /// abscissa for tables.
    pub fn scale(&self) -> f64 {
        match &self.kind {
            CurveKind::GordonSchaefer { k, .. } | CurveKind::SkewedTrue { k, .. } => *k,
            CurveKind::Tabulated { points } => points.last().map(|p| p.0).unwrap_or(1.0),
        }
    }

    /// Expected next-season biomass before noise.
    pub fn growth(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!(
                "growth of `{}` evaluated at invalid biomass {x}",
                self.label
            )));
        }
        Ok(self.eval(x))
    }

    /// Unchecked evaluation; callers guarantee `x >= 0`.
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            CurveKind::GordonSchaefer { r, k } => (x + r * x * (1.0 - x / k)).max(0.0),
            CurveKind::SkewedTrue { r, k, c } => x * (r * (1.0 - x / k) * (x + c) / k).exp(),
            CurveKind::Tabulated { points } => interpolate(points, x),
        }
    }

    /// Net growth `growth(x) - x`.
    pub fn net_growth(&self, x: f64) -> Result<f64> {
        Ok(self.growth(x)? - x)
    }

    /// d growth / dx. Tables return the slope of the containing segment.
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            CurveKind::GordonSchaefer { r, k } => {
                if self.eval(x) <= 0.0 && x > 0.0 {
                    0.0
                } else {
                    1.0 + r * (1.0 - 2.0 * x / k)
                }
            }
            CurveKind::SkewedTrue { r, k, c } => {
                let u = r * (1.0 - x / k) * (x + c) / k;
                let du = r / k * ((1.0 - x / k) - (x + c) / k);
                u.exp() * (1.0 + x * du)
            }
            CurveKind::Tabulated { points } => {
                let i = points.partition_point(|p| p.0 <= x);
                if i == 0 || i >= points.len() {
                    0.0
                } else {
                    let (x0, y0) = points[i - 1];
                    let (x1, y1) = points[i];
                    (y1 - y0) / (x1 - x0)
                }
            }
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let i = points.partition_point(|p| p.0 <= x);
    if i >= points.len() {
        return points[points.len() - 1].1;
    }
    if i == 0 {
        return points[0].1;
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn validate_kind(label: &str, kind: &CurveKind) -> Result<()> {
    let bad = |msg: String| Err(Error::Validation(format!("curve `{label}`: {msg}")));
    let positive = |v: f64| v.is_finite() && v > 0.0;
    match kind {
        CurveKind::GordonSchaefer { r, k } => {
            if !positive(*r) || !positive(*k) {
                return bad(format!("r and K must be positive (r={r}, K={k})"));
            }
        }
        CurveKind::SkewedTrue { r, k, c } => {
            if !positive(*r) || !positive(*k) {
                return bad(format!("r and K must be positive (r={r}, K={k})"));
            }
            if !(c.is_finite() && *c > 0.0 && c < k) {
                return bad(format!("c must lie in (0, K) (c={c}, K={k})"));
            }
        }
        CurveKind::Tabulated { points } => {
            if points.len() < 2 {
                return bad("a table needs at least two points".into());
            }
            if points[0] != (0.0, 0.0) {
                return bad("a table must start at (0, 0)".into());
            }
            if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return bad("table abscissae must be strictly increasing".into());
            }
            if points.iter().any(|p| !p.0.is_finite() || !(p.1 >= 0.0) || !p.1.is_finite()) {
                return bad("table values must be finite and nonnegative".into());
            }
        }
    }
    Ok(())
}

/// Outcome of one harvest-then-grow season.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: f64,
    pub harvest: f64,
}

/// Growth curve plus multiplicative mean-one lognormal noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticModel {
    pub curve: GrowthCurve,
    pub sigma: f64,
}

impl StochasticModel {
    pub fn new(curve: GrowthCurve, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Validation(format!(
                "model `{}`: sigma must be finite and >= 0, got {sigma}",
                curve.label()
            )));
        }
        Ok(Self { curve, sigma })
    }

    pub fn label(&self) -> &str {
        self.curve.label()
    }

    /// Harvest `min(quota, x)`, then grow the escapement with a shock drawn from `rng`.
    ///
    /// Exactly one standard normal is consumed per call, whatever `sigma` is,
    /// so streams stay aligned across models.
    pub fn step<R: Rng + ?Sized>(&self, x: f64, quota: f64, rng: &mut R) -> Result<StepOutcome> {
        let z: f64 = rng.sample(StandardNormal);
        self.step_with_shock(x, quota, z)
    }

    /// Same as [`step`](Self::step) with the standard normal draw supplied.
    pub fn step_with_shock(&self, x: f64, quota: f64, z: f64) -> Result<StepOutcome> {
        if !(x >= 0.0) || !(quota >= 0.0) {
            return Err(Error::Domain(format!(
                "step of `{}` needs x >= 0 and quota >= 0 (x={x}, quota={quota})",
                self.label()
            )));
        }
        let harvest = quota.min(x);
        let escapement = x - harvest;
        let mean = self.curve.growth(escapement)?;
        let next = mean * self.shock(z);
        Ok(StepOutcome { next, harvest })
    }

    /// `exp(sigma z - sigma^2 / 2)`, which has mean one.
    pub fn shock(&self, z: f64) -> f64 {
        (self.sigma * z - 0.5 * self.sigma * self.sigma).exp()
    }
}

/// Ordered, uniquely labelled list of candidate models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    members: Vec<StochasticModel>,
}

impl ModelEnsemble {
    pub fn new(members: Vec<StochasticModel>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation("an ensemble needs at least one member".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].iter().any(|o| o.label() == m.label()) {
                return Err(Error::Validation(format!(
                    "duplicate ensemble label `{}`",
                    m.label()
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[StochasticModel] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = &StochasticModel> {
        self.members.iter()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.members.iter().position(|m| m.label() == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|m| m.label().to_string()).collect()
    }

    /// Replace member `index`, keeping labels unique.
    pub fn replace(&mut self, index: usize, model: StochasticModel) -> Result<()> {
        if self
            .members
            .iter()
            .enumerate()
            .any(|(i, m)| i != index && m.label() == model.label())
        {
            return Err(Error::Validation(format!(
                "duplicate ensemble label `{}`",
                model.label()
            )));
        }
        self.members[index] = model;
        Ok(())
    }
}

/// Label used for grid members: `gs_r{r}_K{K}`.
pub fn gordon_schaefer_label(r: f64, k: f64) -> String {
    format!("gs_r{r}_K{k}")
}

/// One Gordon-Schaefer member per `(r, K)` pair, in row-major (r-outer) order.
pub fn gordon_schaefer_ensemble(r_values: &[f64], k_values: &[f64], sigma: f64) -> Result<ModelEnsemble> {
    if r_values.is_empty() || k_values.is_empty() {
        return Err(Error::Validation("r and K lists must be nonempty".into()));
    }
    if r_values.iter().chain(k_values).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Validation("r and K values must be positive".into()));
    }
    let mut members = Vec::with_capacity(r_values.len() * k_values.len());
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for &r in r_values {
        for &k in k_values {
            if seen.contains(&(r, k)) {
                return Err(Error::Validation(format!("duplicate (r, K) pair ({r}, {k})")));
            }
            seen.push((r, k));
            let curve = GrowthCurve::gordon_schaefer(gordon_schaefer_label(r, k), r, k)?;
            members.push(StochasticModel::new(curve, sigma)?);
        }
    }
    ModelEnsemble::new(members)
}

/// Sup-norm distance between two curves on an evenly spaced grid over `[0, x_max]`.
pub fn sup_distance(a: &GrowthCurve, b: &GrowthCurve, x_max: f64, points: usize) -> f64 {
    (0..points)
        .map(|i| x_max * i as f64 / (points - 1) as f64)
        .map(|x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Grid search for the Gordon-Schaefer curve closest to `target` in sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupNormFit {
    pub r: f64,
    pub k: f64,
    pub distance: f64,
}

/// Search `r = r_min + i * r_step`, `K = k_min + j * k_step` (inclusive bounds),
/// measuring distance on `points` evenly spaced abscissae in `[0, x_max]`.
/// Ties keep the first (smallest r, then smallest K) candidate.
pub fn fit_gordon_schaefer_sup_norm(
    target: &GrowthCurve,
    r_range: (f64, f64, f64),
    k_range: (f64, f64, f64),
    x_max: f64,
    points: usize,
) -> SupNormFit {
    let xs: Vec<f64> = (0..points)
        .map(|i| x_max * i as f64 / (points - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target.eval(x)).collect();
    let steps = |(lo, hi, step): (f64, f64, f64)| ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let mut best = SupNormFit { r: f64::NAN, k: f64::NAN, distance: f64::INFINITY };
    for i in 0..steps(r_range) {
        let r = r_range.0 + i as f64 * r_range.2;
        for j in 0..steps(k_range) {
            let k = k_range.0 + j as f64 * k_range.2;
            let mut d = 0.0f64;
            for (&x, &y) in xs.iter().zip(&ys) {
                let g = (x + r * x * (1.0 - x / k)).max(0.0);
                d = d.max((g - y).abs());
                if d >= best.distance {
                    break;
                }
            }
            if d < best.distance {
                best = SupNormFit { r, k, distance: d };
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn gs(r: f64, k: f64) -> GrowthCurve {
        GrowthCurve::gordon_schaefer("gs", r, k).unwrap()
    }

    #[test]
    fn gordon_schaefer_reference_values() {
        let c = gs(0.5, 1.0);
        assert_eq!(c.growth(0.0).unwrap(), 0.0);
        assert_eq!(c.growth(1.0).unwrap(), 1.0);
        assert!((c.growth(0.5).unwrap() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn negative_biomass_is_a_domain_error() {
        assert!(matches!(gs(0.5, 1.0).growth(-0.1), Err(Error::Domain(_))));
        assert!(gs(0.5, 1.0).growth(f64::NAN).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(GrowthCurve::gordon_schaefer("x", 0.0, 1.0).is_err());
        assert!(GrowthCurve::skewed_true("x", 1.0, 1.0, 1.5).is_err());
        assert!(GrowthCurve::tabulated("x", vec![(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(StochasticModel::new(gs(1.0, 1.0), -0.1).is_err());
    }

    #[test]
    fn gordon_schaefer_is_floored_at_zero() {
        let c = gs(1.0, 0.4);
        assert_eq!(c.growth(2.0).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_interpolates() {
        let c = GrowthCurve::tabulated("t", vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)]).unwrap();
        assert!((c.growth(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c.growth(3.0).unwrap(), 2.0);
        assert_eq!(c.derivative(0.5), 2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let curves = [gs(0.7, 1.2), GrowthCurve::skewed_true("s", 1.0, 1.0, 0.1).unwrap()];
        for c in &curves {
            for i in 1..40 {
                let x = 0.03 * i as f64;
                let h = 1e-6;
                let fd = (c.eval(x + h) - c.eval(x - h)) / (2.0 * h);
                assert!((fd - c.derivative(x)).abs() < 1e-6, "{} at {x}", c.label());
            }
        }
    }

    #[test]
    fn deterministic_step_at_carrying_capacity_stays_put() {
        let m = StochasticModel::new(gs(0.5, 1.0), 0.0).unwrap();
        let mut rng = rng_from_seed(1);
        let mut x = 1.0;
        for _ in 0..50 {
            x = m.step(x, 0.0, &mut rng).unwrap().next;
            assert_eq!(x, 1.0);
        }
    }

    #[test]
    fn quota_above_stock_harvests_everything() {
        let m = StochasticModel::new(gs(0.5, 1.0), 0.1).unwrap();
        let out = m.step(0.3, 0.8, &mut rng_from_seed(2)).unwrap();
        assert_eq!(out.harvest, 0.3);
        assert_eq!(out.next, 0.0);
    }

    #[test]
    fn monte_carlo_mean_matches_growth() {
        // Oracle: sample mean of 1e5 shocked steps vs the noise-free growth.
        let m = StochasticModel::new(gs(0.5, 1.0), 0.1).unwrap();
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let s = 0.4;
        let total: f64 = (0..n).map(|_| m.step(s, 0.0, &mut rng).unwrap().next).sum();
        let expected = m.curve.growth(s).unwrap();
        assert!(((total / n as f64) - expected).abs() / expected < 0.01);
    }

    #[test]
    fn shock_has_mean_one() {
        for sigma in [0.05, 0.1, 0.2, 0.3] {
            let m = StochasticModel::new(gs(1.0, 1.0), sigma).unwrap();
            let mut rng = rng_from_seed(5);
            let n = 100_000;
            let total: f64 = (0..n)
                .map(|_| m.shock(rng.sample::<f64, _>(StandardNormal)))
                .sum();
            assert!((total / n as f64 - 1.0).abs() < 0.01, "sigma {sigma}");
        }
    }

    #[test]
    fn ensemble_of_42() {
        let r = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
        let k = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
        let e = gordon_schaefer_ensemble(&r, &k, 0.05).unwrap();
        assert_eq!(e.len(), 42);
        assert_eq!(e.members()[0].label(), "gs_r0.1_K0.4");
        assert_eq!(e.members()[1].label(), "gs_r0.1_K0.6");
        assert_eq!(e.members()[41].label(), "gs_r1_K1.6");
    }

    #[test]
    fn singleton_ensemble_and_duplicates() {
        assert_eq!(gordon_schaefer_ensemble(&[0.5], &[1.0], 0.0).unwrap().len(), 1);
        assert!(gordon_schaefer_ensemble(&[0.5, 0.5], &[1.0], 0.0).is_err());
        assert!(gordon_schaefer_ensemble(&[], &[1.0], 0.0).is_err());
        let m = StochasticModel::new(gs(1.0, 1.0), 0.0).unwrap();
        assert!(ModelEnsemble::new(vec![m.clone(), m]).is_err());
    }

    proptest! {
        #[test]
        fn ensemble_contains_every_pair_once(
            r in proptest::collection::btree_set(1u32..40, 1..6),
            k in proptest::collection::btree_set(1u32..40, 1..6),
        ) {
            // Oracle: enumerate the Cartesian product independently.
            let rv: Vec<f64> = r.iter().map(|&v| v as f64 / 10.0).collect();
            let kv: Vec<f64> = k.iter().map(|&v| v as f64 / 10.0).collect();
            let e = gordon_schaefer_ensemble(&rv, &kv, 0.05).unwrap();
            prop_assert_eq!(e.len(), rv.len() * kv.len());
            for &ri in &rv {
                for &ki in &kv {
                    let hits = e.iter().filter(|m| matches!(m.curve.kind(),
                        CurveKind::GordonSchaefer { r, k } if *r == ri && *k == ki)).count();
                    prop_assert_eq!(hits, 1);
                }
            }
        }

        #[test]
        fn growth_is_zero_at_zero_and_nonnegative(
            r in 0.05f64..2.5, k in 0.2f64..2.0, frac in 0.01f64..0.99, x in 0.0f64..4.0,
        ) {
            let curves = [
                GrowthCurve::gordon_schaefer("a", r, k).unwrap(),
                GrowthCurve::skewed_true("b", r, k, frac * k).unwrap(),
            ];
            for c in &curves {
                prop_assert_eq!(c.growth(0.0).unwrap(), 0.0);
                prop_assert!(c.growth(x).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn growth_is_continuous_on_dense_grid() {
        // Max adjacent jump bounded by spacing times a local slope bound.
        let curves = [
            gs(1.0, 1.0),
            gs(0.2, 1.6),
            GrowthCurve::skewed_true("s", 1.0, 1.0, 0.1).unwrap(),
            GrowthCurve::tabulated("t", vec![(0.0, 0.0), (0.5, 0.8), (1.0, 1.0), (2.0, 0.5)]).unwrap(),
        ];
        for c in &curves {
            let n = 20_000;
            let top = 2.0 * c.scale();
            let h = top / n as f64;
            for i in 0..n {
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                let slope = c.derivative(a).abs().max(c.derivative(b).abs()) + 1e-9;
                let jump = (c.eval(b) - c.eval(a)).abs();
                assert!(jump <= h * slope * 1.01 + 1e-12, "{} jump at {a}", c.label());
            }
        }
    }
}
