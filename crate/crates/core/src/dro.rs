//! Wasserstein ambiguity sets and the three tuning solvers.
//!
//! * DRDOC maximizes the worst-case expected critical-mode damping over a
//!   1-Wasserstein ball around the empirical disturbance distribution.
//! * SO maximizes the empirical expectation (the same pipeline with `δ = 0`).
//! * RO maximizes the minimum damping over a fixed disturbance range.
//!
//! All three share the constraint set: nominal critical damping within
//! `[ζ_min, ζ_max]`, a first-order cap on the shift of every other plant
//! mode, and the parameter boxes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pce::{self, PceSurrogate, Standardization};
use crate::poly::Polynomial;
use crate::sslin::{eigendecompose, predict_shift, residue, ControllerBounds, ControllerParams, Interval, Param};
use crate::testbed::{linearize, DampingMap, TestbedConfig, SPEED_OUTPUT, STABILIZER_INPUT};

/// 1-Wasserstein distance between two equal-weight empirical distributions.
///
/// Equal lengths use the order-statistics formula; unequal lengths integrate
/// the difference of the two quantile functions over their common
/// refinement of `[0, 1]`.
pub fn w1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("w1_distance needs non-empty samples".into()));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let mut a = p.to_vec();
    let mut b = q.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        // advance both when the breakpoints coincide (exact for k/n = l/m)
        let (adv_i, adv_j) = ((i + 1) * m <= (j + 1) * n, (j + 1) * n <= (i + 1) * m);
        i += adv_i as usize;
        j += adv_j as usize;
    }
    Ok(total)
}

/// Result of radius calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusCalibration {
    pub radius: f64,
    /// Light-tail constant `D`.
    pub d_const: f64,
    /// Minimizing `α` (0 for degenerate samples).
    pub alpha: f64,
}

const ALPHA_GRID: usize = 241;

/// `D = 2·inf_α √((1 + ln mean exp(α(ξ−μ)²)) / (2α))` and
/// `δ = D·√(2·ln(1/β) / N)`.
///
/// The log-moment is computed with log-sum-exp, so no grid point overflows;
/// the infimum is bracketed on a log grid of `α·Var` in `[1e-4, 1e4]` and
/// refined by golden section in `ln α`. Zero-variance samples (up to roundoff) give `δ = 0`.
pub fn calibrate_radius(samples: &[f64], beta: f64) -> Result<RadiusCalibration> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("radius calibration needs N >= 2 samples, got {n}")));
    }
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must lie in (0, 0.5]")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sq: Vec<f64> = samples.iter().map(|v| (v - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / n as f64;
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if var <= (1e-12 * scale).powi(2) {
        return Ok(RadiusCalibration { radius: 0.0, d_const: 0.0, alpha: 0.0 });
    }
    let ln_n = (n as f64).ln();
    let objective = |ln_alpha: f64| {
        let alpha = ln_alpha.exp();
        let terms: Vec<f64> = sq.iter().map(|s| alpha * s).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() - ln_n;
        ((1.0 + lse) / (2.0 * alpha)).sqrt()
    };
    let (lo, hi) = ((1e-4 / var).ln(), (1e4 / var).ln());
    let step = (hi - lo) / (ALPHA_GRID - 1) as f64;
    let values: Vec<f64> = (0..ALPHA_GRID).map(|k| objective(lo + step * k as f64)).collect();
    let best = (0..ALPHA_GRID)
        .filter(|k| values[*k].is_finite())
        .min_by(|a, b| values[*a].total_cmp(&values[*b]))
        .ok_or_else(|| Error::InvalidParameter("exponential moment is not finite anywhere on the grid".into()))?;
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = lo + step * (best + 1).min(ALPHA_GRID - 1) as f64;
    let (ln_alpha, phi) = golden_min(objective, a, b, 1e-12);
    let d_const = 2.0 * phi.min(values[best]);
    let radius = d_const * (2.0 * (1.0 / beta).ln() / n as f64).sqrt();
    Ok(RadiusCalibration { radius, d_const, alpha: ln_alpha.exp() })
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimum of a unimodal function on `[a, b]`.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Empirical samples with a Wasserstein radius on a bounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    pub samples: Vec<f64>,
    pub radius: f64,
    pub beta: f64,
    pub d_const: f64,
    pub support: Interval,
}

impl AmbiguitySet {
    /// Calibrates the radius from `(N, β)`.
    pub fn calibrated(samples: Vec<f64>, beta: f64, support: Interval) -> Result<Self> {
        let cal = calibrate_radius(&samples, beta)?;
        Self::with_radius(samples, cal.radius, beta, cal.d_const, support)
    }

    pub fn with_radius(samples: Vec<f64>, radius: f64, beta: f64, d_const: f64, support: Interval) -> Result<Self> {
        let set = Self { samples, radius, beta, d_const, support };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Empty("ambiguity set has no samples".into()));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius {} must be finite and >= 0", self.radius)));
        }
        if !(self.support.lo < self.support.hi) {
            return Err(Error::InvalidParameter("support must be a non-degenerate interval".into()));
        }
        if let Some(v) = self.samples.iter().find(|v| !self.support.contains(**v)) {
            return Err(Error::InvalidParameter(format!("sample {v} lies outside the support")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// Same samples and support with a different radius.
    pub fn with_new_radius(&self, radius: f64) -> Self {
        Self { radius, ..self.clone() }
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.n() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.n() as f64).sqrt()
    }
}

/// Probability mass moved from sample `sample` to `point`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub sample: usize,
    pub point: f64,
    pub weight: f64,
}

/// Worst-case expectation with its dual certificate and a primal
/// worst-case distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub value: f64,
    pub lambda: f64,
    pub empirical_mean: f64,
    /// `Σ w·d̂(x)` of the reconstructed distribution.
    pub primal_value: f64,
    /// `Σ w·|x − ξ̂|` of the reconstructed distribution.
    pub transport: f64,
    pub atoms: Vec<Atom>,
}

/// Candidate minimizers of `g(x) + λ|x − x̂|` shared by all samples at one `λ`.
struct Stationary {
    /// Roots of `g' + λ` (stationary to the right of a sample).
    right: Vec<f64>,
    /// Roots of `g' − λ` (stationary to the left of a sample).
    left: Vec<f64>,
}

struct Dual<'a> {
    g: &'a Polynomial,
    dg: &'a Polynomial,
    samples: &'a [f64],
    support: Interval,
    radius: f64,
}

impl Dual<'_> {
    fn stationary(&self, lambda: f64) -> Result<Stationary> {
        let roots = |p: Polynomial| {
            if p.coeffs().iter().any(|c| !c.is_finite()) {
                return Err(Error::RootFinding { coefficients: p.coeffs().to_vec() });
            }
            Ok(p.real_roots_in(self.support.lo, self.support.hi))
        };
        Ok(Stationary { right: roots(self.dg.shifted(lambda))?, left: roots(self.dg.shifted(-lambda))? })
    }

    /// `(point, value)` candidates for sample `x̂`.
    fn candidates(&self, st: &Stationary, lambda: f64, xhat: f64) -> Vec<(f64, f64)> {
        let cost = |x: f64| self.g.eval(x) + lambda * (x - xhat).abs();
        let mut out: Vec<f64> = vec![self.support.lo, xhat, self.support.hi];
        out.extend(st.right.iter().filter(|x| **x > xhat));
        out.extend(st.left.iter().filter(|x| **x < xhat));
        out.into_iter().map(|x| (x, cost(x))).collect()
    }

    fn objective(&self, lambda: f64) -> Result<f64> {
        let st = self.stationary(lambda)?;
        let inner: f64 = self
            .samples
            .iter()
            .map(|&xh| self.candidates(&st, lambda, xh).into_iter().map(|c| c.1).fold(f64::INFINITY, f64::min))
            .sum();
        Ok(-lambda * self.radius + inner / self.samples.len() as f64)
    }
}

/// Tolerance for treating two inner minimizers as tied.
const ARGMIN_TOL: f64 = 1e-10;

/// `inf` of `E[d̂]` over the ball, by its exact 1-D dual
/// `sup_{λ≥0} −λδ + (1/N) Σ_i min_x [d̂(x) + λ|x − ξ̂_i|]`.
pub fn worst_case_expectation(surrogate: &PceSurrogate, set: &AmbiguitySet) -> Result<WorstCase> {
    let g = surrogate.to_raw_polynomial_1d()?;
    worst_case_polynomial(&g, set)
}

/// [`worst_case_expectation`] for a polynomial given in raw coordinates.
pub fn worst_case_polynomial(g: &Polynomial, set: &AmbiguitySet) -> Result<WorstCase> {
    set.validate()?;
    let n = set.n() as f64;
    let empirical_mean = set.samples.iter().map(|x| g.eval(*x)).sum::<f64>() / n;
    let identity_atoms =
        || set.samples.iter().enumerate().map(|(i, x)| Atom { sample: i, point: *x, weight: 1.0 / n }).collect();
    if set.radius == 0.0 || g.degree() == 0 {
        return Ok(WorstCase {
            value: empirical_mean,
            lambda: 0.0,
            empirical_mean,
            primal_value: empirical_mean,
            transport: 0.0,
            atoms: identity_atoms(),
        });
    }

    let dg = g.derivative();
    let dual = Dual { g, dg: &dg, samples: &set.samples, support: set.support, radius: set.radius };

    // λ beyond max |g'| never moves mass, so the dual decreases from there.
    let mut lambda_hi = dg.eval(set.support.lo).abs().max(dg.eval(set.support.hi).abs());
    for x in dg.derivative().real_roots_in(set.support.lo, set.support.hi) {
        lambda_hi = lambda_hi.max(dg.eval(x).abs());
    }

    let mut err = None;
    let neg = |l: f64| match dual.objective(l) {
        Ok(v) => -v,
        Err(e) => {
            err.get_or_insert(e);
            f64::INFINITY
        }
    };
    let (l_star, neg_best) = golden_min(neg, 0.0, lambda_hi, 1e-15);
    if let Some(e) = err {
        return Err(e);
    }
    let mut best = (l_star, -neg_best);
    for l in [0.0, lambda_hi] {
        let v = dual.objective(l)?;
        if v > best.1 {
            best = (l, v);
        }
    }
    let (lambda, value) = best;

    // Primal reconstruction: each sample moves to its nearest or farthest
    // tied minimizer; the common mixing weight spends exactly δ when λ > 0.
    let st = dual.stationary(lambda)?;
    let mut near = Vec::with_capacity(set.n());
    let mut far = Vec::with_capacity(set.n());
    for &xh in &set.samples {
        let cands = dual.candidates(&st, lambda, xh);
        let min = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let tied: Vec<f64> = cands.iter().filter(|c| c.1 <= min + ARGMIN_TOL * (1.0 + min.abs())).map(|c| c.0).collect();
        let dist = |x: &f64| (x - xh).abs();
        near.push(*tied.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))).expect("candidate set is non-empty"));
        far.push(*tied.iter().max_by(|a, b| dist(a).total_cmp(&dist(b))).expect("candidate set is non-empty"));
    }
    let t = |pts: &[f64]| pts.iter().zip(&set.samples).map(|(x, xh)| (x - xh).abs()).sum::<f64>() / n;
    let (t_near, t_far) = (t(&near), t(&far));
    let theta = if lambda > 0.0 && t_far > t_near { ((set.radius - t_near) / (t_far - t_near)).clamp(0.0, 1.0) } else { 0.0 };
    let mut atoms = Vec::with_capacity(2 * set.n());
    for i in 0..set.n() {
        if theta < 1.0 {
            atoms.push(Atom { sample: i, point: near[i], weight: (1.0 - theta) / n });
        }
        if theta > 0.0 {
            atoms.push(Atom { sample: i, point: far[i], weight: theta / n });
        }
    }
    let primal_value = atoms.iter().map(|a| a.weight * g.eval(a.point)).sum();
    let transport = atoms.iter().map(|a| a.weight * (a.point - set.samples[a.sample]).abs()).sum();
    Ok(WorstCase { value, lambda, empirical_mean, primal_value, transport, atoms })
}

/// Solver selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Drdoc,
    So,
    Ro,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Drdoc => "drdoc",
            Method::So => "so",
            Method::Ro => "ro",
        }
    }
}

/// Solver settings shared by the three methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSettings {
    /// Decision parameters (at most three); the rest stay at `base`.
    pub decision: Vec<Param>,
    pub bounds: ControllerBounds,
    pub base: ControllerParams,
    /// Bounds on the nominal (`e = 0`) closed-loop critical damping ratio.
    pub zeta_min: f64,
    pub zeta_max: f64,
    /// Cap on `|Δλ|` (1/s) predicted for every other plant mode.
    pub shift_cap: f64,
    pub pce_order: usize,
    pub pce_samples: usize,
    /// Seed of the design shared by every candidate.
    pub seed: u64,
    pub grid_per_axis: usize,
    /// Pattern-search stopping step in normalized parameter units.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Minimum damping required over the RO range.
    pub ro_min_damping: f64,
    pub ro_grid: usize,
}

impl Default for TuningSettings {
    fn default() -> Self {
        Self {
            decision: vec![Param::Km, Param::T1],
            bounds: ControllerBounds::default(),
            base: ControllerParams::default(),
            zeta_min: 0.03,
            zeta_max: 0.10,
            shift_cap: 5.0,
            pce_order: 4,
            pce_samples: 40,
            seed: 0,
            grid_per_axis: 12,
            tolerance: 1e-3,
            max_iterations: 200,
            ro_min_damping: 0.01,
            ro_grid: 201,
        }
    }
}

impl TuningSettings {
    pub fn validate(&self) -> Result<()> {
        if self.decision.is_empty() || self.decision.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "decision dimension {} must be between 1 and 3",
                self.decision.len()
            )));
        }
        for (k, p) in self.decision.iter().enumerate() {
            let iv = self
                .bounds
                .get(*p)
                .ok_or_else(|| Error::InvalidParameter(format!("{p} is not a tunable parameter")))?;
            if !(iv.lo < iv.hi) {
                return Err(Error::InvalidParameter(format!("degenerate box for {p}")));
            }
            if self.decision[..k].contains(p) {
                return Err(Error::InvalidParameter(format!("{p} listed twice")));
            }
        }
        if !(self.zeta_min < self.zeta_max) {
            return Err(Error::InvalidParameter("zeta_min must be below zeta_max".into()));
        }
        if !(self.shift_cap > 0.0) {
            return Err(Error::InvalidParameter("shift_cap must be positive".into()));
        }
        if self.grid_per_axis < 2 {
            return Err(Error::InvalidParameter("grid_per_axis must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        if self.ro_grid < 2 {
            return Err(Error::InvalidParameter("ro_grid must be at least 2".into()));
        }
        self.base.validate()
    }

    fn params_at(&self, u: &[f64]) -> ControllerParams {
        let mut p = self.base;
        for (param, x) in self.decision.iter().zip(u) {
            let iv = self.bounds.get(*param).expect("validated decision parameter");
            p.set(*param, iv.lo + x.clamp(0.0, 1.0) * iv.width());
        }
        p
    }
}

/// Settings plus the ambiguity set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningProblem {
    pub settings: TuningSettings,
    pub ambiguity: AmbiguitySet,
}

impl TuningProblem {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        self.ambiguity.validate()
    }
}

/// One audited constraint. `slack >= 0` means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl ConstraintCheck {
    fn lower(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let slack = value - limit;
        Self { name: name.into(), value, limit, slack, satisfied: slack >= 0.0 }
    }
    fn upper(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let slack = limit - value;
        Self { name: name.into(), value, limit, slack, satisfied: slack >= 0.0 }
    }
    fn failed(name: impl Into<String>) -> Self {
        Self { name: name.into(), value: f64::NAN, limit: f64::NAN, slack: f64::NEG_INFINITY, satisfied: false }
    }
}

/// Search trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub phase: String,
    pub params: Vec<f64>,
    pub objective: Option<f64>,
    pub feasible: bool,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
}

/// Outcome of one tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub method: Method,
    pub status: Status,
    pub decision: Vec<Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ControllerParams>,
    /// Value maximized by the search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// Infimum of the surrogate expectation over the ball (DRDOC/SO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case_expected_damping: Option<f64>,
    /// Surrogate expectation under the empirical distribution (DRDOC/SO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_expected_damping: Option<f64>,
    /// Constant PCE coefficient: expectation under the fitted normal model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pce_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_multiplier: Option<f64>,
    /// Minimum true damping over the range (RO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_critical_damping: Option<f64>,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Interval>,
    pub constraints: Vec<ConstraintCheck>,
    pub binding_constraints: Vec<String>,
    pub flat_objective: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_rate: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

/// Evaluated candidate.
#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    feasible: bool,
    constraints: Vec<ConstraintCheck>,
    worst: Option<f64>,
    nominal_expected: Option<f64>,
    pce_mean: Option<f64>,
    lambda: Option<f64>,
    min_damping: Option<f64>,
    nominal_zeta: Option<f64>,
    warnings: Vec<String>,
}

impl Candidate {
    fn violation(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| if c.slack.is_finite() { (-c.slack).max(0.0) / c.limit.abs().max(1e-3) } else { 1e6 })
            .sum()
    }
}

/// Nominal-point constraints shared by all methods.
fn nominal_constraints(
    settings: &TuningSettings,
    config: &TestbedConfig,
    map: &DampingMap,
    params: &ControllerParams,
) -> (Vec<ConstraintCheck>, Option<f64>) {
    let mut checks = Vec::new();
    for p in &settings.decision {
        let iv = settings.bounds.get(*p).expect("validated decision parameter");
        let v = params.get(*p);
        checks.push(ConstraintCheck::lower(format!("bound:{p}:lower"), v, iv.lo));
        checks.push(ConstraintCheck::upper(format!("bound:{p}:upper"), v, iv.hi));
    }
    let nominal = map.eval(0.0).ok();
    match nominal {
        Some(z) => {
            checks.push(ConstraintCheck::lower("nominal_damping:min", z, settings.zeta_min));
            checks.push(ConstraintCheck::upper("nominal_damping:max", z, settings.zeta_max));
        }
        None => checks.push(ConstraintCheck::failed("nominal_damping")),
    }
    match shift_checks(settings, config, params) {
        Ok(mut c) => checks.append(&mut c),
        Err(_) => checks.push(ConstraintCheck::failed("mode_shift")),
    }
    (checks, nominal)
}

/// First-order shift of every open-loop plant mode other than the critical
/// pair, on the upper half plane plus real modes.
fn shift_checks(settings: &TuningSettings, config: &TestbedConfig, params: &ControllerParams) -> Result<Vec<ConstraintCheck>> {
    let plant = linearize(config, 0.0)?;
    let modes = eigendecompose(&plant)?;
    let critical = *modes.oscillatory_modes().first().ok_or(Error::NoOscillatoryMode)?;
    let mut out = Vec::new();
    for i in 0..modes.len() {
        let lambda = modes.eigenvalue(i);
        if i == critical || lambda.im < 0.0 {
            continue;
        }
        let r = residue(&plant, &modes, i, STABILIZER_INPUT, SPEED_OUTPUT)?;
        let shift = predict_shift(r, params, lambda)?.norm();
        out.push(ConstraintCheck::upper(format!("mode_shift:{:.4}{:+.4}i", lambda.re, lambda.im), shift, settings.shift_cap));
    }
    Ok(out)
}

/// Surrogate of `e ↦ d(e, p)` fitted on the design shared by all candidates.
pub fn fit_damping_surrogate(map: &DampingMap, set: &AmbiguitySet, order: usize, n_design: usize, seed: u64) -> Result<PceSurrogate> {
    let (mu, sigma) = (set.mean(), set.std());
    let rec = Standardization::new(vec![mu], vec![sigma], None)?;
    let support = [Interval::new((set.support.lo - mu) / sigma, (set.support.hi - mu) / sigma)];
    let xi = pce::normal_design(n_design, 1, seed, Some(&support));
    let d: Vec<f64> = xi.iter().map(|x| map.eval(mu + sigma * x[0])).collect::<Result<_>>()?;
    pce::fit(&xi, &d, order, rec)
}

fn evaluate_expectation(problem: &TuningProblem, config: &TestbedConfig, params: &ControllerParams) -> Candidate {
    let settings = &problem.settings;
    let map = match DampingMap::new(config, params) {
        Ok(m) => m,
        Err(e) => return infeasible_candidate(format!("controller: {e}")),
    };
    let (mut constraints, nominal_zeta) = nominal_constraints(settings, config, &map, params);
    let mut warnings = Vec::new();
    let fitted = fit_damping_surrogate(&map, &problem.ambiguity, settings.pce_order, settings.pce_samples, settings.seed)
        .and_then(|s| worst_case_expectation(&s, &problem.ambiguity).map(|w| (s, w)));
    let (objective, worst, nominal_expected, pce_mean, lambda) = match fitted {
        Ok((s, w)) => {
            warnings.extend(s.diagnostics.warnings.iter().cloned());
            (w.value, Some(w.value), Some(w.empirical_mean), Some(s.moments().0), Some(w.lambda))
        }
        Err(e) => {
            constraints.push(ConstraintCheck::failed(format!("surrogate: {e}")));
            (f64::NEG_INFINITY, None, None, None, None)
        }
    };
    let feasible = constraints.iter().all(|c| c.satisfied);
    Candidate {
        objective,
        feasible,
        constraints,
        worst,
        nominal_expected,
        pce_mean,
        lambda,
        min_damping: None,
        nominal_zeta,
        warnings,
    }
}

fn infeasible_candidate(reason: String) -> Candidate {
    Candidate {
        objective: f64::NEG_INFINITY,
        feasible: false,
        constraints: vec![ConstraintCheck::failed(reason)],
        worst: None,
        nominal_expected: None,
        pce_mean: None,
        lambda: None,
        min_damping: None,
        nominal_zeta: None,
        warnings: Vec::new(),
    }
}

/// Minimum of the true damping map over `range`: dense grid, then golden
/// refinement between the neighbours of the grid minimum.
pub fn range_min_damping(map: &DampingMap, range: Interval, grid: usize) -> Result<(f64, f64)> {
    if range.width() == 0.0 {
        return Ok((range.lo, map.eval(range.lo)?));
    }
    let pts: Vec<f64> = (0..grid).map(|k| range.lo + range.width() * k as f64 / (grid - 1) as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|e| map.eval(*e)).collect::<Result<_>>()?;
    let k = (0..grid).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).expect("grid is non-empty");
    let (a, b) = (pts[k.saturating_sub(1)], pts[(k + 1).min(grid - 1)]);
    let (e, v) = golden_min(|e| map.eval(e).unwrap_or(f64::INFINITY), a, b, 1e-10);
    Ok(if v < vals[k] { (e, v) } else { (pts[k], vals[k]) })
}

fn evaluate_range(settings: &TuningSettings, config: &TestbedConfig, params: &ControllerParams, range: Interval) -> Candidate {
    let map = match DampingMap::new(config, params) {
        Ok(m) => m,
        Err(e) => return infeasible_candidate(format!("controller: {e}")),
    };
    let (mut constraints, nominal_zeta) = nominal_constraints(settings, config, &map, params);
    let min = range_min_damping(&map, range, settings.ro_grid);
    let objective = match &min {
        Ok((_, v)) => {
            constraints.push(ConstraintCheck::lower("range_min_damping", *v, settings.ro_min_damping));
            *v
        }
        Err(e) => {
            constraints.push(ConstraintCheck::failed(format!("range_min_damping: {e}")));
            f64::NEG_INFINITY
        }
    };
    let feasible = constraints.iter().all(|c| c.satisfied);
    Candidate {
        objective,
        feasible,
        constraints,
        worst: None,
        nominal_expected: None,
        pce_mean: None,
        lambda: None,
        min_damping: min.ok().map(|m| m.1),
        nominal_zeta,
        warnings: Vec::new(),
    }
}

/// Result of the grid + pattern search.
struct SearchOutcome {
    best: Option<(Vec<f64>, Candidate)>,
    least_violating: Option<(Vec<f64>, Candidate)>,
    flat: bool,
    iterations: usize,
    evaluations: usize,
    trace: Vec<TraceRow>,
}

fn quantize(u: &[f64]) -> Vec<i64> {
    u.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Maximizes over the unit box: a full grid, then a compass pattern search
/// from the best feasible grid point. Infeasible points score `−∞`.
fn search(settings: &TuningSettings, eval: impl Fn(&[f64]) -> Candidate + Sync) -> SearchOutcome {
    let k = settings.decision.len();
    let g = settings.grid_per_axis;
    let mut cache: BTreeMap<Vec<i64>, Candidate> = BTreeMap::new();
    let mut trace = Vec::new();
    let score = |c: &Candidate| if c.feasible { c.objective } else { f64::NEG_INFINITY };

    let grid: Vec<Vec<f64>> = (0..g.pow(k as u32))
        .map(|mut idx| {
            (0..k)
                .map(|_| {
                    let j = idx % g;
                    idx /= g;
                    j as f64 / (g - 1) as f64
                })
                .collect()
        })
        .collect();
    let evaluate_batch = |pts: &[Vec<f64>], cache: &mut BTreeMap<Vec<i64>, Candidate>| -> Vec<Candidate> {
        let fresh: Vec<&Vec<f64>> = pts.iter().filter(|u| !cache.contains_key(&quantize(u))).collect();
        let results: Vec<Candidate> = fresh.par_iter().map(|u| eval(u)).collect();
        for (u, c) in fresh.into_iter().zip(results) {
            cache.insert(quantize(u), c);
        }
        pts.iter().map(|u| cache[&quantize(u)].clone()).collect()
    };
    let to_params = |u: &[f64]| -> Vec<f64> {
        let p = settings.params_at(u);
        settings.decision.iter().map(|d| p.get(*d)).collect()
    };

    let grid_evals = evaluate_batch(&grid, &mut cache);
    for (u, c) in grid.iter().zip(&grid_evals) {
        trace.push(TraceRow {
            iteration: 0,
            phase: "grid".into(),
            params: to_params(u),
            objective: c.objective.is_finite().then_some(c.objective),
            feasible: c.feasible,
            step: 1.0 / (g - 1) as f64,
        });
    }
    let feasible_vals: Vec<f64> = grid_evals.iter().filter(|c| c.feasible).map(|c| c.objective).collect();
    let flat = !feasible_vals.is_empty()
        && feasible_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - feasible_vals.iter().copied().fold(f64::INFINITY, f64::min)
            < 1e-12;
    let least_violating = grid
        .iter()
        .zip(&grid_evals)
        .min_by(|a, b| a.1.violation().total_cmp(&b.1.violation()))
        .map(|(u, c)| (u.clone(), c.clone()));

    // first index wins ties, so the search is deterministic
    let mut best_idx = None;
    for (i, c) in grid_evals.iter().enumerate() {
        if c.feasible && best_idx.is_none_or(|b: usize| score(c) > score(&grid_evals[b])) {
            best_idx = Some(i);
        }
    }
    let Some(bi) = best_idx else {
        return SearchOutcome {
            best: None,
            least_violating,
            flat,
            iterations: 0,
            evaluations: cache.len(),
            trace,
        };
    };

    let mut x = grid[bi].clone();
    let mut fx = grid_evals[bi].clone();
    let mut step = 1.0 / (g - 1) as f64;
    let mut iterations = 0;
    while step >= settings.tolerance && iterations < settings.max_iterations {
        iterations += 1;
        let polls: Vec<Vec<f64>> = (0..k)
            .flat_map(|axis| {
                [-1.0, 1.0].into_iter().map({
                    let x = x.clone();
                    move |dir| {
                        let mut y = x.clone();
                        y[axis] = (y[axis] + dir * step).clamp(0.0, 1.0);
                        y
                    }
                })
            })
            .filter(|y| quantize(y) != quantize(&x))
            .collect();
        let results = evaluate_batch(&polls, &mut cache);
        let mut improved = None;
        for (i, c) in results.iter().enumerate() {
            if score(c) > score(&fx) + 1e-15 && improved.is_none_or(|b: usize| score(c) > score(&results[b])) {
                improved = Some(i);
            }
        }
        if let Some(i) = improved {
            x = polls[i].clone();
            fx = results[i].clone();
        } else {
            step *= 0.5;
        }
        trace.push(TraceRow {
            iteration: iterations,
            phase: "pattern".into(),
            params: to_params(&x),
            objective: Some(fx.objective),
            feasible: fx.feasible,
            step,
        });
    }
    SearchOutcome { best: Some((x, fx)), least_violating, flat, iterations, evaluations: cache.len(), trace }
}

fn binding(constraints: &[ConstraintCheck]) -> Vec<String> {
    constraints
        .iter()
        .filter(|c| c.satisfied && c.slack <= 1e-2 * c.limit.abs().max(1e-2))
        .map(|c| c.name.clone())
        .collect()
}

fn violated(constraints: &[ConstraintCheck]) -> String {
    constraints.iter().filter(|c| !c.satisfied).map(|c| c.name.clone()).collect::<Vec<_>>().join(", ")
}

fn expectation_report(method: Method, problem: &TuningProblem, config: &TestbedConfig) -> Result<TuningReport> {
    problem.validate()?;
    config.validate()?;
    let settings = &problem.settings;
    let out = search(settings, |u| evaluate_expectation(problem, config, &settings.params_at(u)));
    let Some((u, c)) = out.best else {
        let detail = out.least_violating.map(|(_, c)| violated(&c.constraints)).unwrap_or_default();
        return Err(Error::Infeasible(format!("no feasible parameters; least-violating grid point violates: {detail}")));
    };
    let mut warnings = c.warnings.clone();
    if out.flat {
        warnings.push("objective is flat over the feasible grid; any feasible point is optimal".into());
    }
    Ok(TuningReport {
        method,
        status: Status::Optimal,
        decision: settings.decision.clone(),
        params: Some(settings.params_at(&u)),
        objective: Some(c.objective),
        worst_case_expected_damping: c.worst,
        nominal_expected_damping: c.nominal_expected,
        pce_mean: c.pce_mean,
        dual_multiplier: c.lambda,
        min_damping: None,
        nominal_critical_damping: c.nominal_zeta,
        radius: problem.ambiguity.radius,
        range: None,
        binding_constraints: binding(&c.constraints),
        constraints: c.constraints,
        flat_objective: out.flat,
        scenario_rate: None,
        iterations: out.iterations,
        evaluations: out.evaluations,
        trace: out.trace,
        warnings,
    })
}

/// Maximizes the worst-case expected damping over the ambiguity ball.
pub fn solve_drdoc(problem: &TuningProblem, config: &TestbedConfig) -> Result<TuningReport> {
    expectation_report(Method::Drdoc, problem, config)
}

/// Maximizes the empirical expected damping (`δ = 0`).
pub fn solve_so(problem: &TuningProblem, config: &TestbedConfig) -> Result<TuningReport> {
    let collapsed = TuningProblem { settings: problem.settings.clone(), ambiguity: problem.ambiguity.with_new_radius(0.0) };
    expectation_report(Method::So, &collapsed, config)
}

/// Maximizes the minimum true damping over `range`. When no parameters meet
/// the constraints (including `ro_min_damping`) the report has status
/// `infeasible`, no parameters, and the audit of the least-violating grid
/// point.
pub fn solve_ro(settings: &TuningSettings, config: &TestbedConfig, range: Interval) -> Result<TuningReport> {
    settings.validate()?;
    config.validate()?;
    if !(range.lo <= range.hi && range.lo >= config.e_min && range.hi <= config.e_max) {
        return Err(Error::InvalidParameter(format!(
            "range [{}, {}] is not within the support [{}, {}]",
            range.lo, range.hi, config.e_min, config.e_max
        )));
    }
    let out = search(settings, |u| evaluate_range(settings, config, &settings.params_at(u), range));
    let (status, point, c) = match out.best {
        Some((u, c)) => (Status::Optimal, Some(u), c),
        None => {
            let (_, c) = out
                .least_violating
                .ok_or_else(|| Error::Infeasible("empty search grid".into()))?;
            (Status::Infeasible, None, c)
        }
    };
    let optimal = status == Status::Optimal;
    Ok(TuningReport {
        method: Method::Ro,
        status,
        decision: settings.decision.clone(),
        params: point.map(|u| settings.params_at(&u)),
        objective: optimal.then_some(c.objective),
        worst_case_expected_damping: None,
        nominal_expected_damping: None,
        pce_mean: None,
        dual_multiplier: None,
        min_damping: if optimal { c.min_damping } else { None },
        nominal_critical_damping: if optimal { c.nominal_zeta } else { None },
        radius: 0.0,
        range: Some(range),
        binding_constraints: if optimal { binding(&c.constraints) } else { Vec::new() },
        constraints: c.constraints,
        flat_objective: out.flat,
        scenario_rate: None,
        iterations: out.iterations,
        evaluations: out.evaluations,
        trace: out.trace,
        warnings: Vec::new(),
    })
}

/// Out-of-sample evaluation on the true damping map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioValidation {
    /// Fraction of scenarios with positive damping.
    pub rate: f64,
    /// Per-scenario damping; `None` where the operating point failed.
    pub damping: Vec<Option<f64>>,
    /// Indices of failed scenarios (counted as non-positive).
    pub failed: Vec<usize>,
}

pub fn validate_scenarios(params: &ControllerParams, config: &TestbedConfig, scenarios: &[f64]) -> Result<ScenarioValidation> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario set is empty".into()));
    }
    let map = DampingMap::new(config, params)?;
    let damping: Vec<Option<f64>> = scenarios.par_iter().map(|e| map.eval(*e).ok()).collect();
    let failed: Vec<usize> = damping.iter().enumerate().filter(|(_, d)| d.is_none()).map(|(i, _)| i).collect();
    let positive = damping.iter().filter(|d| d.is_some_and(|z| z > 0.0)).count();
    Ok(ScenarioValidation { rate: positive as f64 / scenarios.len() as f64, damping, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(samples: Vec<f64>, radius: f64) -> AmbiguitySet {
        AmbiguitySet::with_radius(samples, radius, 0.03, 0.0, Interval::new(-1.0, 1.0)).unwrap()
    }

    #[test]
    fn w1_small_cases() {
        assert_eq!(w1_distance(&[0.3, -0.2], &[-0.2, 0.3]).unwrap(), 0.0);
        assert_eq!(w1_distance(&[0.0], &[2.5]).unwrap(), 2.5);
        assert_eq!(w1_distance(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 2.0);
        assert!(w1_distance(&[], &[1.0]).is_err());
        // {0, 1} vs {0}: quantile functions differ on (1/2, 1] by 1
        assert!((w1_distance(&[0.0, 1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        // unequal lengths agree with replicated equal-length samples
        let p = [0.1, 0.7, -0.4];
        let q = [0.0, 0.5];
        let p6: Vec<f64> = p.iter().flat_map(|v| [*v, *v]).collect();
        let q6: Vec<f64> = q.iter().flat_map(|v| [*v, *v, *v]).collect();
        assert!((w1_distance(&p, &q).unwrap() - w1_distance(&p6, &q6).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn radius_monotone_in_beta_and_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..200).map(|_| rng.random_range(-0.4..0.4)).collect();
        let a = calibrate_radius(&s, 0.03).unwrap();
        let b = calibrate_radius(&s, 0.3).unwrap();
        assert!(a.radius > b.radius);
        assert!(a.d_const > 0.0);
        let constant = calibrate_radius(&[0.2; 10], 0.03).unwrap();
        assert_eq!(constant.radius, 0.0);
        assert!(calibrate_radius(&[0.1], 0.03).is_err());
        assert!(calibrate_radius(&s, 0.7).is_err());
    }

    #[test]
    fn radius_infimum_is_bracketed() {
        // brute-force the objective on a very fine grid
        let s = [-0.3, -0.1, 0.05, 0.2, 0.4, 0.1];
        let cal = calibrate_radius(&s, 0.1).unwrap();
        let mu = s.iter().sum::<f64>() / 6.0;
        let phi = |a: f64| {
            let m = s.iter().map(|x| (a * (x - mu).powi(2)).exp()).sum::<f64>() / 6.0;
            ((1.0 + m.ln()) / (2.0 * a)).sqrt()
        };
        let brute = (1..20000).map(|k| phi(0.01 * k as f64)).fold(f64::INFINITY, f64::min);
        assert!(cal.d_const <= 2.0 * brute + 1e-9);
        assert!((cal.d_const - 2.0 * brute).abs() < 1e-4);
    }

    #[test]
    fn dual_linear_closed_form() {
        let g = Polynomial::new(vec![0.02, 0.05]);
        let s = set(vec![-0.2, 0.0, 0.1, 0.3], 0.05);
        let w = worst_case_polynomial(&g, &s).unwrap();
        let mean = s.samples.iter().map(|x| g.eval(*x)).sum::<f64>() / 4.0;
        assert!((w.value - (mean - 0.05 * 0.05)).abs() < 1e-12);
        assert!((w.transport - 0.05).abs() < 1e-9);
        assert!((w.primal_value - w.value).abs() < 1e-9);
    }

    #[test]
    fn dual_zero_radius_and_constant() {
        let g = Polynomial::new(vec![0.01, -0.2, 0.3, 0.5]);
        let s = set(vec![-0.5, 0.1, 0.6], 0.0);
        let w = worst_case_polynomial(&g, &s).unwrap();
        assert!((w.value - w.empirical_mean).abs() < 1e-15);
        let c = worst_case_polynomial(&Polynomial::new(vec![0.04]), &s.with_new_radius(0.3)).unwrap();
        assert_eq!(c.value, 0.04);
    }

    #[test]
    fn dual_nonincreasing_and_slack() {
        let g = Polynomial::new(vec![0.02, 0.03, -0.08, 0.01, 0.05]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..50).map(|_| rng.random_range(-0.6..0.6)).collect();
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let d = 0.02 * k as f64;
            let w = worst_case_polynomial(&g, &set(samples.clone(), d)).unwrap();
            assert!(w.value <= prev + 1e-12);
            prev = w.value;
            assert!(w.transport <= d + 1e-6);
            if w.lambda > 1e-9 {
                assert!((w.transport - d).abs() < 1e-6, "δ={d} transport={}", w.transport);
            }
            assert!((w.primal_value - w.value).abs() < 1e-8, "δ={d}: {} vs {}", w.primal_value, w.value);
            let mass: f64 = w.atoms.iter().map(|a| a.weight).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_matches_brute_force_lp() {
        // discretize the support and solve the primal by exhaustive
        // per-sample greedy on the concave envelope: compare with a fine λ scan
        let g = Polynomial::new(vec![0.0, 0.1, -0.5, 0.0, 0.8]);
        let s = set(vec![-0.4, -0.1, 0.2, 0.5], 0.07);
        let w = worst_case_polynomial(&g, &s).unwrap();
        let grid: Vec<f64> = (0..=4000).map(|k| -1.0 + k as f64 * 0.0005).collect();
        let scan = (0..=3000)
            .map(|k| {
                let l = k as f64 * 0.001;
                -l * 0.07
                    + s.samples
                        .iter()
                        .map(|xh| grid.iter().map(|x| g.eval(*x) + l * (x - xh).abs()).fold(f64::INFINITY, f64::min))
                        .sum::<f64>()
                        / 4.0
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(w.value >= scan - 1e-9);
        assert!(w.value - scan < 1e-4);
    }

    #[test]
    fn scenario_validation_basics() {
        let cfg = TestbedConfig::default();
        let p = ControllerParams { k_m: 5.0, t_1: 0.9, ..ControllerParams::default() };
        let v = validate_scenarios(&p, &cfg, &[0.0; 5]).unwrap();
        assert_eq!(v.rate, 1.0);
        assert!(validate_scenarios(&p, &cfg, &[]).is_err());
        let bad = validate_scenarios(&p, &cfg, &[0.0, 3.0]).unwrap();
        assert_eq!(bad.failed, vec![1]);
        assert_eq!(bad.rate, 0.5);
    }

    #[test]
    fn constant_objective_is_flagged_flat() {
        let settings = TuningSettings { grid_per_axis: 4, ..TuningSettings::default() };
        let constant = |_: &[f64]| Candidate {
            objective: 0.05,
            feasible: true,
            constraints: Vec::new(),
            worst: Some(0.05),
            nominal_expected: Some(0.05),
            pce_mean: Some(0.05),
            lambda: Some(0.0),
            min_damping: None,
            nominal_zeta: Some(0.05),
            warnings: Vec::new(),
        };
        let out = search(&settings, constant);
        assert!(out.flat);
        assert_eq!(out.best.unwrap().1.objective, 0.05);
        // polls never improve: the step halves from 1/3 to below 1e-3 (9
        // rounds), the first round reuses grid points, each other adds 2
        assert_eq!(out.iterations, 9);
        assert_eq!(out.evaluations, 16 + 8 * 2);
    }

    fn small_settings() -> TuningSettings {
        TuningSettings { grid_per_axis: 5, tolerance: 0.02, pce_samples: 20, pce_order: 3, ..TuningSettings::default() }
    }

    #[test]
    fn so_and_zero_radius_drdoc_agree() {
        let cfg = TestbedConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<f64> = (0..40).map(|_| rng.random_range(-0.5..0.5)).collect();
        let amb = AmbiguitySet::with_radius(samples, 0.0, 0.03, 0.0, Interval::new(-1.0, 1.0)).unwrap();
        let problem = TuningProblem { settings: small_settings(), ambiguity: amb };
        let d = solve_drdoc(&problem, &cfg).unwrap();
        let s = solve_so(&problem.clone(), &cfg).unwrap();
        assert!((d.objective.unwrap() - s.objective.unwrap()).abs() < 1e-6);
        assert!(d.worst_case_expected_damping.unwrap() <= d.nominal_expected_damping.unwrap() + 1e-9);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<TuningReport>(&json).unwrap(), d);
    }

    #[test]
    fn ro_point_range_and_infeasible() {
        let cfg = TestbedConfig::default();
        let settings = small_settings();
        let point = solve_ro(&settings, &cfg, Interval::new(0.0, 0.0)).unwrap();
        assert_eq!(point.status, Status::Optimal);
        let strict = TuningSettings { ro_min_damping: 0.5, ..settings };
        let r = solve_ro(&strict, &cfg, Interval::new(-1.0, 1.0)).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.params.is_none());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["status"], "infeasible");
        assert!(json.get("params").is_none());
        assert!(solve_ro(&strict, &cfg, Interval::new(-1.5, 0.0)).is_err());
    }
}
