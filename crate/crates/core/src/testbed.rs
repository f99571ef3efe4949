//! Single-machine infinite-bus plant (Heffron–Phillips model with a static
//! exciter). The disturbance `e` shifts the injected power `p = p_ref + e`,
//! which moves the operating point and therefore the linearization.
//!
//! States: `Δδ` (rad), `Δω` (p.u.), `ΔE'q` (p.u.), `ΔE_fd` (p.u.).
//! Input: stabilizer signal summed into the exciter reference.
//! Output: `Δω`.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sslin::{self, close_loop, eigendecompose, realize_controller, ControllerParams, ModeSet, StateSpaceModel};

/// Plant input index of the stabilizer injection.
pub const STABILIZER_INPUT: usize = 0;
/// Plant output index of the speed deviation.
pub const SPEED_OUTPUT: usize = 0;
/// Number of plant states.
pub const PLANT_STATES: usize = 4;

/// Machine, network and exciter data (per-unit unless noted).
///
/// The defaults were calibrated so that the open-loop electromechanical mode
/// is weakly damped at `e = 0` (ζ ≈ 0.015) and becomes unstable towards the
/// edge of the disturbance range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestbedConfig {
    /// Inertia constant (s).
    pub h: f64,
    /// Mechanical damping coefficient.
    pub damping: f64,
    pub x_d: f64,
    pub x_d_prime: f64,
    pub x_q: f64,
    /// External (line) reactance.
    pub x_e: f64,
    /// Open-circuit field time constant (s).
    pub t_d0_prime: f64,
    pub k_a: f64,
    /// Exciter time constant (s).
    pub t_a: f64,
    /// Regulated terminal-voltage magnitude.
    pub v_t: f64,
    /// Infinite-bus voltage magnitude.
    pub v_b: f64,
    /// Synchronous speed (rad/s).
    pub omega_0: f64,
    pub p_ref: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            h: 3.5,
            damping: 2.0,
            x_d: 1.6,
            x_d_prime: 0.32,
            x_q: 0.6,
            x_e: 0.4,
            t_d0_prime: 6.0,
            k_a: 20.0,
            t_a: 0.05,
            v_t: 1.0,
            v_b: 1.0,
            omega_0: 2.0 * std::f64::consts::PI * 60.0,
            p_ref: 0.5,
            e_min: -1.0,
            e_max: 1.0,
        }
    }
}

impl TestbedConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks signs and feasibility over the whole disturbance range.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("x_d", self.x_d),
            ("x_d_prime", self.x_d_prime),
            ("x_q", self.x_q),
            ("x_e", self.x_e),
            ("t_d0_prime", self.t_d0_prime),
            ("t_a", self.t_a),
            ("v_t", self.v_t),
            ("v_b", self.v_b),
            ("omega_0", self.omega_0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("damping", self.damping), ("k_a", self.k_a), ("p_ref", self.p_ref)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite")));
            }
        }
        if !(self.e_min.is_finite() && self.e_max.is_finite() && self.e_min <= self.e_max) {
            return Err(Error::InvalidParameter(format!(
                "disturbance bounds [{}, {}] are not an interval",
                self.e_min, self.e_max
            )));
        }
        // The load angle is monotone in p, but check a grid to be safe.
        for k in 0..=40 {
            let e = self.e_min + (self.e_max - self.e_min) * k as f64 / 40.0;
            operating_point(self, e)?;
        }
        Ok(())
    }
}

/// Equilibrium and linearization constants at `p = p_ref + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub e: f64,
    pub p: f64,
    /// Rotor angle relative to the infinite bus (rad).
    pub delta: f64,
    /// Terminal-voltage angle relative to the infinite bus (rad).
    pub theta: f64,
    /// Transient internal voltage `E'q`.
    pub e_q_prime: f64,
    pub v_d: f64,
    pub v_q: f64,
    pub i_d: f64,
    pub i_q: f64,
    /// `K1..K6`.
    pub k: [f64; 6],
    /// `|V_t V_b sin θ / x_e - p|` at the solved angle.
    pub residual: f64,
}

/// Solves `f(θ) = 0` on `[lo, hi]` with Newton steps safeguarded by bisection.
fn safeguarded_newton(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let (flo, _) = f(lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx.abs() <= tol {
            break;
        }
        if (fx < 0.0) == (flo < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        x = if dfx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < f64::EPSILON * 4.0 {
            break;
        }
    }
    x
}

/// Solves the steady state for injected power `p_ref + e`.
pub fn operating_point(config: &TestbedConfig, e: f64) -> Result<OperatingPoint> {
    let infeasible = |reason: String| Error::InfeasibleOperatingPoint { e, reason };
    if !e.is_finite() {
        return Err(infeasible("non-finite disturbance".into()));
    }
    let TestbedConfig { v_t, v_b, x_e, x_d, x_d_prime, x_q, .. } = *config;
    let p = config.p_ref + e;
    let p_max = v_t * v_b / x_e;
    if p.abs() >= p_max {
        return Err(infeasible(format!("|p| = {} exceeds the transfer limit {p_max}", p.abs())));
    }

    let power = |th: f64| (p_max * th.sin() - p, p_max * th.cos());
    let theta = safeguarded_newton(power, -FRAC_PI_2, FRAC_PI_2, 1e-14);
    let residual = power(theta).0.abs();
    if residual >= 1e-10 {
        return Err(infeasible(format!("power-angle residual {residual:.3e}")));
    }

    let vt = Complex64::from_polar(v_t, theta);
    let j = Complex64::i();
    let current = (vt - v_b) / (j * x_e);
    let e_q_phasor = vt + j * x_q * current;
    let delta = e_q_phasor.arg();
    if delta.abs() >= FRAC_PI_2 {
        return Err(infeasible(format!("rotor angle {delta:.4} rad is beyond 90 degrees")));
    }
    let rot = Complex64::from_polar(1.0, -(delta - FRAC_PI_2));
    let (vdq, idq) = (vt * rot, current * rot);
    let (v_d, v_q, i_d, i_q) = (vdq.re, vdq.im, idq.re, idq.im);
    let e_q_prime = v_q + x_d_prime * i_d;

    let (sd, cd) = delta.sin_cos();
    let xdp_e = x_d_prime + x_e;
    let xq_e = x_q + x_e;
    let k1 = e_q_prime * v_b * cd / xq_e + (x_q - x_d_prime) * (i_q * v_b * sd / xdp_e + i_d * v_b * cd / xq_e);
    let k2 = v_b * sd / xdp_e;
    let k3 = xdp_e / (x_d + x_e);
    let k4 = (x_d - x_d_prime) * v_b * sd / xdp_e;
    let k5 = (v_d / v_t) * x_q * v_b * cd / xq_e - (v_q / v_t) * x_d_prime * v_b * sd / xdp_e;
    let k6 = (v_q / v_t) * x_e / xdp_e;
    if k1 <= 0.0 {
        return Err(infeasible(format!("synchronizing coefficient K1 = {k1:.4} is not positive")));
    }

    Ok(OperatingPoint {
        e,
        p,
        delta,
        theta,
        e_q_prime,
        v_d,
        v_q,
        i_d,
        i_q,
        k: [k1, k2, k3, k4, k5, k6],
        residual,
    })
}

/// Assembles the 4-state model from an operating point.
pub fn model_at(config: &TestbedConfig, op: &OperatingPoint) -> Result<StateSpaceModel> {
    let [k1, k2, k3, k4, k5, k6] = op.k;
    let TestbedConfig { h, damping, t_d0_prime: t, k_a, t_a, omega_0, .. } = *config;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0,                omega_0,               0.0,                  0.0,
        -k1 / (2.0 * h),    -damping / (2.0 * h),  -k2 / (2.0 * h),      0.0,
        -k4 / t,            0.0,                   -1.0 / (k3 * t),      1.0 / t,
        -k_a * k5 / t_a,    0.0,                   -k_a * k6 / t_a,      -1.0 / t_a,
    ]);
    // Negative sign so that the loop's negative feedback, u = -G Δω, adds
    // damping torque for a conventionally phased stabilizer.
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, -k_a / t_a]);
    let c = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]);
    StateSpaceModel::with_names(
        a,
        b,
        c,
        DMatrix::zeros(1, 1),
        vec!["delta".into(), "omega".into(), "e_q_prime".into(), "e_fd".into()],
        vec!["stabilizer".into()],
        vec!["omega".into()],
    )
}

/// Linearized plant at `p = p_ref + e`.
pub fn linearize(config: &TestbedConfig, e: f64) -> Result<StateSpaceModel> {
    model_at(config, &operating_point(config, e)?)
}

/// Caller-owned state for following one mode across a sweep.
///
/// The overlap `|t_ref^H t|` is computed on the first `components` entries
/// of the unit right eigenvectors, so a reference taken on the plant alone
/// can be matched against closed-loop modes.
#[derive(Debug, Clone, Default)]
pub struct ModeTracker {
    reference: Option<DVector<Complex64>>,
}

fn leading_unit(v: &DVector<Complex64>, components: usize) -> DVector<Complex64> {
    let head = v.rows(0, components.min(v.len())).into_owned();
    let norm = head.norm();
    if norm > 0.0 {
        head / Complex64::new(norm, 0.0)
    } else {
        head
    }
}

impl ModeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.reference = None;
    }

    pub fn has_reference(&self) -> bool {
        self.reference.is_some()
    }

    /// Selects the tracked mode, updating the reference.
    ///
    /// Without a reference the lowest-ζ oscillatory mode is chosen;
    /// otherwise the upper-half-plane oscillatory mode of maximum overlap.
    pub fn select(&mut self, modes: &ModeSet, components: usize) -> Result<usize> {
        let chosen = match &self.reference {
            None => *modes.oscillatory_modes().first().ok_or(Error::NoOscillatoryMode)?,
            Some(reference) => {
                let k = reference.len();
                if components < k || modes.len() < k {
                    return Err(Error::InvalidModel(format!(
                        "tracking reference has {k} components, mode set has {}",
                        modes.len()
                    )));
                }
                modes
                    .oscillatory_modes()
                    .into_iter()
                    .map(|i| {
                        let t = leading_unit(&modes.right_vector(i), k);
                        (i, reference.dotc(&t).norm())
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .ok_or(Error::NoOscillatoryMode)?
            }
        };
        self.reference = Some(leading_unit(&modes.right_vector(chosen), components));
        Ok(chosen)
    }
}

/// Critical-mode damping `d(e, p)` of the closed loop for fixed controller
/// parameters.
///
/// For each `e` the open-loop critical (lowest-ζ oscillatory) mode of the
/// plant is located first; the closed-loop mode whose plant-state part
/// overlaps it most is then reported. Each evaluation is independent of
/// call order.
#[derive(Debug, Clone)]
pub struct DampingMap {
    config: TestbedConfig,
    params: ControllerParams,
    controller: StateSpaceModel,
}

/// Eigenvalue and damping of the tracked critical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalMode {
    pub eigenvalue: Complex64,
    pub damping: f64,
    pub frequency_hz: f64,
}

impl DampingMap {
    pub fn new(config: &TestbedConfig, params: &ControllerParams) -> Result<Self> {
        Ok(Self { config: config.clone(), params: *params, controller: realize_controller(params)? })
    }

    pub fn config(&self) -> &TestbedConfig {
        &self.config
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    /// Closed-loop model at disturbance `e`.
    pub fn closed_loop(&self, e: f64) -> Result<StateSpaceModel> {
        let plant = linearize(&self.config, e)?;
        close_loop(&plant, &self.controller, STABILIZER_INPUT, SPEED_OUTPUT)
    }

    pub fn critical_mode(&self, e: f64) -> Result<CriticalMode> {
        let plant = linearize(&self.config, e)?;
        let mut tracker = ModeTracker::new();
        tracker.select(&eigendecompose(&plant)?, PLANT_STATES)?;
        self.critical_mode_tracked(&plant, &mut tracker)
    }

    /// Uses (and updates) a caller-owned tracker instead of re-anchoring on
    /// the open-loop plant.
    pub fn critical_mode_with(&self, e: f64, tracker: &mut ModeTracker) -> Result<CriticalMode> {
        let plant = linearize(&self.config, e)?;
        self.critical_mode_tracked(&plant, tracker)
    }

    fn critical_mode_tracked(&self, plant: &StateSpaceModel, tracker: &mut ModeTracker) -> Result<CriticalMode> {
        let cl = close_loop(plant, &self.controller, STABILIZER_INPUT, SPEED_OUTPUT)?;
        let modes = eigendecompose(&cl)?;
        let i = tracker.select(&modes, PLANT_STATES)?;
        let eigenvalue = modes.eigenvalue(i);
        if !modes.is_oscillatory(i) {
            return Err(Error::NoOscillatoryMode);
        }
        Ok(CriticalMode {
            eigenvalue,
            damping: sslin::damping_ratio(eigenvalue)?,
            frequency_hz: modes.frequencies_hz()[i],
        })
    }

    pub fn eval(&self, e: f64) -> Result<f64> {
        Ok(self.critical_mode(e)?.damping)
    }
}

/// `d(e, p)`: closed-loop critical-mode damping at disturbance `e`.
pub fn damping_map(config: &TestbedConfig, params: &ControllerParams, e: f64) -> Result<f64> {
    DampingMap::new(config, params)?.eval(e)
}

/// Open-loop critical mode of the plant at `e`.
pub fn open_loop_critical(config: &TestbedConfig, e: f64) -> Result<CriticalMode> {
    let modes = eigendecompose(&linearize(config, e)?)?;
    let i = *modes.oscillatory_modes().first().ok_or(Error::NoOscillatoryMode)?;
    let eigenvalue = modes.eigenvalue(i);
    Ok(CriticalMode { eigenvalue, damping: modes.damping_ratios()[i], frequency_hz: modes.frequencies_hz()[i] })
}

/// Two-range disturbance mixture: a `fraction` of draws uniform on
/// `±inner`, the rest uniform on `±outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMix {
    pub fraction: f64,
    pub inner: f64,
    pub outer: f64,
}

impl Default for ScenarioMix {
    fn default() -> Self {
        Self { fraction: 0.6, inner: 0.3, outer: 1.0 }
    }
}

/// Stratified, shuffled scenario draws. Exactly `round(fraction * n)` come
/// from the inner range.
pub fn scenario_generate(config: &TestbedConfig, n: usize, mix: ScenarioMix, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&mix.fraction) {
        return Err(Error::InvalidParameter(format!("mixture fraction {} not in [0, 1]", mix.fraction)));
    }
    for (name, r) in [("inner", mix.inner), ("outer", mix.outer)] {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} range {r} must be non-negative")));
        }
        if -r < config.e_min || r > config.e_max {
            return Err(Error::InvalidParameter(format!(
                "{name} range ±{r} exceeds disturbance bounds [{}, {}]",
                config.e_min, config.e_max
            )));
        }
    }
    let n_inner = (mix.fraction * n as f64).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha20Rng, r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
    let mut out: Vec<f64> = (0..n).map(|k| draw(&mut rng, if k < n_inner { mix.inner } else { mix.outer })).collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Writes a single-column `e_pu` CSV.
pub fn write_scenarios(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e_pu"])?;
    for v in values {
        w.write_record([crate::fmt_csv_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a single-column `e_pu` CSV.
pub fn read_scenarios(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.get(0).map(str::trim) != Some("e_pu") {
        return Err(Error::Malformed { line: 1, message: "expected header `e_pu`".into() });
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Malformed { line: k + 2, message: format!("not a number: {field:?}") })?;
        out.push(v);
    }
    Ok(out)
}
