//! Linear small-signal analysis.
//!
//! All interconnections use **negative feedback**: the controller output is
//! subtracted at the selected plant input, `u = r - G(s) y`. Under this
//! convention a controller with transfer function `G` moves a simple mode
//! `λ` by approximately `-r·G(λ)`, where `r` is the mode's residue on the
//! selected channel pair (see [`predict_shift`]).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue gap below which a mode counts as repeated.
pub const SIMPLE_MODE_TOL: f64 = 1e-9;
/// Eigenvector-matrix condition above which a decomposition is flagged.
pub const DEFECTIVE_CONDITION: f64 = 1e12;
/// Output magnitude beyond which a step response is flagged as diverging.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Continuous-time linear model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    state_names: Vec<String>,
    input_names: Vec<String>,
    output_names: Vec<String>,
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl StateSpaceModel {
    /// Builds a model with generated labels (`x1.., u1.., y1..`).
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
        Self::with_names(
            a,
            b,
            c,
            d,
            default_labels("x", n),
            default_labels("u", m),
            default_labels("y", p),
        )
    }

    pub fn with_names(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        state_names: Vec<String>,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!("a is {}x{}, not square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::InvalidModel(format!("b has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::InvalidModel(format!("c has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::InvalidModel(format!(
                "d is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        for (name, m) in [("a", &a), ("b", &b), ("c", &c), ("d", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        if state_names.len() != n || input_names.len() != b.ncols() || output_names.len() != c.nrows() {
            return Err(Error::InvalidModel("label counts do not match matrix dimensions".into()));
        }
        Ok(Self { a, b, c, d, state_names, input_names, output_names })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }
    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }
    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    fn check_channels(&self, input: usize, output: usize) -> Result<()> {
        if input >= self.n_inputs() {
            return Err(Error::IndexOutOfRange(format!("input {input} of {}", self.n_inputs())));
        }
        if output >= self.n_outputs() {
            return Err(Error::IndexOutOfRange(format!("output {output} of {}", self.n_outputs())));
        }
        Ok(())
    }

    /// Evaluates `C (sI - A)^-1 B + D` on one channel pair.
    pub fn transfer(&self, s: Complex64, input: usize, output: usize) -> Result<Complex64> {
        self.check_channels(input, output)?;
        let n = self.n_states();
        let d = Complex64::new(self.d[(output, input)], 0.0);
        if n == 0 {
            return Ok(d);
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let rhs = DVector::from_fn(n, |i, _| Complex64::new(self.b[(i, input)], 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter(format!("s = {s} is an eigenvalue of a")))?;
        let cx: Complex64 = (0..n).map(|i| x[i] * self.c[(output, i)]).sum();
        Ok(cx + d)
    }
}

/// On-disk layout: row-major nested arrays plus labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    #[serde(default)]
    state_names: Option<Vec<String>>,
    #[serde(default)]
    input_names: Option<Vec<String>>,
    #[serde(default)]
    output_names: Option<Vec<String>>,
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::InvalidModel(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidModel(format!(
                "{name} row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<ModelFile> for StateSpaceModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let n = f.a.len();
        let p = f.c.len();
        let m = if n > 0 {
            f.b.first().map_or(0, Vec::len)
        } else {
            f.d.first().map_or(0, Vec::len)
        };
        let a = rows_to_matrix("a", &f.a, n, n)?;
        let b = rows_to_matrix("b", &f.b, n, m)?;
        let c = rows_to_matrix("c", &f.c, p, n)?;
        let d = rows_to_matrix("d", &f.d, p, m)?;
        Self::with_names(
            a,
            b,
            c,
            d,
            f.state_names.unwrap_or_else(|| default_labels("x", n)),
            f.input_names.unwrap_or_else(|| default_labels("u", m)),
            f.output_names.unwrap_or_else(|| default_labels("y", p)),
        )
    }
}

impl From<StateSpaceModel> for ModelFile {
    fn from(m: StateSpaceModel) -> Self {
        ModelFile {
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
            c: matrix_to_rows(&m.c),
            d: matrix_to_rows(&m.d),
            state_names: Some(m.state_names),
            input_names: Some(m.input_names),
            output_names: Some(m.output_names),
        }
    }
}

/// Eigenvalues with biorthonormal right/left eigenvectors.
#[derive(Debug, Clone)]
pub struct ModeSet {
    eigenvalues: Vec<Complex64>,
    /// Columns are right eigenvectors `t_i`.
    right: DMatrix<Complex64>,
    /// Rows are left eigenvectors `v_i`, scaled so that `v_i t_j = δ_ij`.
    left: DMatrix<Complex64>,
    damping_ratios: Vec<f64>,
    frequencies_hz: Vec<f64>,
    state_labels: Vec<String>,
    condition: f64,
    warning: Option<String>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }
    pub fn eigenvalue(&self, i: usize) -> Complex64 {
        self.eigenvalues[i]
    }
    pub fn right_vectors(&self) -> &DMatrix<Complex64> {
        &self.right
    }
    pub fn left_vectors(&self) -> &DMatrix<Complex64> {
        &self.left
    }
    pub fn right_vector(&self, i: usize) -> DVector<Complex64> {
        self.right.column(i).into_owned()
    }
    pub fn left_vector(&self, i: usize) -> RowDVector<Complex64> {
        self.left.row(i).into_owned()
    }
    pub fn damping_ratios(&self) -> &[f64] {
        &self.damping_ratios
    }
    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }
    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }
    /// Frobenius-norm condition estimate of the right eigenvector matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Whether mode `i` belongs to a complex-conjugate pair.
    pub fn is_oscillatory(&self, i: usize) -> bool {
        let l = self.eigenvalues[i];
        l.im.abs() > 1e-9 * l.norm().max(1.0)
    }

    /// Indices of oscillatory modes with non-negative imaginary part.
    pub fn oscillatory_modes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_oscillatory(i) && self.eigenvalues[i].im > 0.0).collect()
    }

    /// `max |V T - I|` over all entries.
    pub fn biorthonormality_error(&self) -> f64 {
        let prod = &self.left * &self.right;
        let n = prod.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// `max_i ||A t_i - λ_i t_i|| / ||A||` (Frobenius norm of `A`).
    pub fn relative_residual(&self, a: &DMatrix<f64>) -> f64 {
        let norm_a = a.norm().max(f64::MIN_POSITIVE);
        let ac = a.map(|v| Complex64::new(v, 0.0));
        (0..self.len())
            .map(|i| {
                let t = self.right.column(i);
                let r = &ac * t - t * self.eigenvalues[i];
                r.norm() / norm_a
            })
            .fold(0.0, f64::max)
    }

    /// Whether mode `i` is separated from every other eigenvalue.
    pub fn is_simple(&self, i: usize) -> bool {
        let li = self.eigenvalues[i];
        let tol = SIMPLE_MODE_TOL * li.norm().max(1.0);
        self.eigenvalues
            .iter()
            .enumerate()
            .all(|(j, lj)| j == i || (lj - li).norm() > tol)
    }
}

/// `ζ = -Re λ / |λ|`.
pub fn damping_ratio(lambda: Complex64) -> Result<f64> {
    let mag = lambda.norm();
    if mag == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    Ok(-lambda.re / mag)
}

fn mode_damping(lambda: Complex64) -> f64 {
    // A zero eigenvalue is marginal; report it as undamped.
    damping_ratio(lambda).unwrap_or(0.0)
}

/// Eigendecomposition of the model's state matrix.
pub fn eigendecompose(model: &StateSpaceModel) -> Result<ModeSet> {
    eigendecompose_labeled(model.a(), model.state_names().to_vec())
}

/// Eigendecomposition of a bare square matrix with generated state labels.
pub fn eigendecompose_matrix(a: &DMatrix<f64>) -> Result<ModeSet> {
    eigendecompose_labeled(a, default_labels("x", a.nrows()))
}

fn eigendecompose_labeled(a: &DMatrix<f64>, state_labels: Vec<String>) -> Result<ModeSet> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidModel(format!("a is {}x{}, not square", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("a has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(ModeSet {
            eigenvalues: Vec::new(),
            right: DMatrix::zeros(0, 0),
            left: DMatrix::zeros(0, 0),
            damping_ratios: Vec::new(),
            frequencies_hz: Vec::new(),
            state_labels,
            condition: 1.0,
            warning: None,
        });
    }

    let fa = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let evd = faer::linalg::solvers::Eigen::new_from_real(fa.as_ref())
        .map_err(|_| Error::EigenNoConvergence { dim: n })?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut modes: Vec<(Complex64, DVector<Complex64>)> = (0..n)
        .map(|k| {
            let mut t = DVector::from_fn(n, |i, _| u[(i, k)]);
            normalize_vector(&mut t);
            (s[k], t)
        })
        .collect();
    if modes.iter().any(|(l, t)| !l.re.is_finite() || t.iter().any(|v| !v.re.is_finite())) {
        return Err(Error::EigenNoConvergence { dim: n });
    }
    modes.sort_by(|(la, _), (lb, _)| {
        let key = |l: &Complex64| (mode_damping(*l), l.im.abs(), -l.im);
        key(la).partial_cmp(&key(lb)).unwrap_or(std::cmp::Ordering::Equal)
    });

    let eigenvalues: Vec<Complex64> = modes.iter().map(|(l, _)| *l).collect();
    let right = DMatrix::from_fn(n, n, |i, k| modes[k].1[i]);
    let left = right.clone().lu().try_inverse().ok_or_else(|| {
        Error::InvalidModel("defective state matrix: eigenvectors are linearly dependent".into())
    })?;
    let condition = right.norm() * left.norm();
    let warning = (condition > DEFECTIVE_CONDITION || !condition.is_finite()).then(|| {
        format!("near-defective state matrix: eigenvector condition {condition:.3e}")
    });

    Ok(ModeSet {
        damping_ratios: eigenvalues.iter().map(|l| mode_damping(*l)).collect(),
        frequencies_hz: eigenvalues.iter().map(|l| l.im.abs() / (2.0 * PI)).collect(),
        eigenvalues,
        right,
        left,
        state_labels,
        condition,
        warning,
    })
}

/// Unit 2-norm with the largest-magnitude entry rotated onto the positive real axis.
fn normalize_vector(t: &mut DVector<Complex64>) {
    let norm = t.norm();
    if norm == 0.0 {
        return;
    }
    let pivot = t
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bm), (i, v)| if v.norm() > bm * (1.0 + 1e-12) { (i, v.norm()) } else { (bi, bm) })
        .0;
    let phase = t[pivot] / t[pivot].norm();
    let scale = phase.conj() / norm;
    for v in t.iter_mut() {
        *v *= scale;
    }
}

/// Normalized state participation in each mode (state × mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipationMatrix {
    pub labels: Vec<String>,
    /// `values[s][i]`: participation of state `s` in mode `i`.
    pub values: Vec<Vec<f64>>,
}

impl ParticipationMatrix {
    pub fn get(&self, state: usize, mode: usize) -> f64 {
        self.values[state][mode]
    }

    /// State index with the largest participation in `mode`.
    pub fn dominant_state(&self, mode: usize) -> usize {
        (0..self.values.len())
            .max_by(|&a, &b| self.values[a][mode].total_cmp(&self.values[b][mode]))
            .unwrap_or(0)
    }
}

/// `p_si = |t_si v_is|`, normalized so each mode's column sums to one.
pub fn participation_factors(modes: &ModeSet) -> ParticipationMatrix {
    let n = modes.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        let raw: Vec<f64> = (0..n).map(|s| (modes.right[(s, i)] * modes.left[(i, s)]).norm()).collect();
        let total: f64 = raw.iter().sum();
        for s in 0..n {
            values[s][i] = raw[s] / total;
        }
    }
    ParticipationMatrix { labels: modes.state_labels.clone(), values }
}

/// Residue of mode `mode` on the `input -> output` channel:
/// `r_i = (c_out · t_i)(v_i · b_in)`.
pub fn residue(
    model: &StateSpaceModel,
    modes: &ModeSet,
    mode: usize,
    input: usize,
    output: usize,
) -> Result<Complex64> {
    model.check_channels(input, output)?;
    if mode >= modes.len() {
        return Err(Error::IndexOutOfRange(format!("mode {mode} of {}", modes.len())));
    }
    if modes.len() != model.n_states() {
        return Err(Error::InvalidModel("mode set does not belong to this model".into()));
    }
    if !modes.is_simple(mode) {
        return Err(Error::NonSimpleMode { mode });
    }
    let n = model.n_states();
    let ct: Complex64 = (0..n).map(|s| modes.right[(s, mode)] * model.c[(output, s)]).sum();
    let vb: Complex64 = (0..n).map(|s| modes.left[(mode, s)] * model.b[(s, input)]).sum();
    Ok(ct * vb)
}

/// First-order eigenvalue shift caused by closing the controller loop
/// (negative feedback) around a mode with the given residue: `-r·G(λ)`.
pub fn predict_shift(residue: Complex64, controller: &ControllerParams, lambda: Complex64) -> Result<Complex64> {
    let g = controller.response(lambda)?;
    Ok(-residue * g)
}

/// Tunable controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "k_m")]
    Km,
    #[serde(rename = "t_1")]
    T1,
    #[serde(rename = "t_2")]
    T2,
    #[serde(rename = "t_3")]
    T3,
    #[serde(rename = "t_4")]
    T4,
    #[serde(rename = "t_w")]
    Tw,
}

impl Param {
    /// The five parameters screened and tuned by the pipeline.
    pub const TUNABLE: [Param; 5] = [Param::Km, Param::T1, Param::T2, Param::T3, Param::T4];
    pub const ALL: [Param; 6] = [Param::Km, Param::T1, Param::T2, Param::T3, Param::T4, Param::Tw];

    pub fn name(self) -> &'static str {
        match self {
            Param::Km => "k_m",
            Param::T1 => "t_1",
            Param::T2 => "t_2",
            Param::T3 => "t_3",
            Param::T4 => "t_4",
            Param::Tw => "t_w",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        [Param::Km, Param::T1, Param::T2, Param::T3, Param::T4, Param::Tw]
            .into_iter()
            .find(|p| p.name() == name)
    }
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Washout plus two lead-lag stages with gain:
/// `G(s) = k_m · sT_w/(1+sT_w) · (1+sT_1)/(1+sT_2) · (1+sT_3)/(1+sT_4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub k_m: f64,
    pub t_1: f64,
    pub t_2: f64,
    pub t_3: f64,
    pub t_4: f64,
    pub t_w: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { k_m: 1.0, t_1: 0.1, t_2: 0.05, t_3: 0.1, t_4: 0.1, t_w: 5.0 }
    }
}

impl ControllerParams {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Km => self.k_m,
            Param::T1 => self.t_1,
            Param::T2 => self.t_2,
            Param::T3 => self.t_3,
            Param::T4 => self.t_4,
            Param::Tw => self.t_w,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::Km => self.k_m = value,
            Param::T1 => self.t_1 = value,
            Param::T2 => self.t_2 = value,
            Param::T3 => self.t_3 = value,
            Param::T4 => self.t_4 = value,
            Param::Tw => self.t_w = value,
        }
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        self.set(p, value);
        self
    }

    /// Time constants must be positive; a zero gain disconnects the controller.
    pub fn validate(&self) -> Result<()> {
        if !(self.k_m.is_finite() && self.k_m >= 0.0) {
            return Err(Error::InvalidParameter(format!("k_m = {} must be finite and >= 0", self.k_m)));
        }
        for p in [Param::T1, Param::T2, Param::T3, Param::T4, Param::Tw] {
            let v = self.get(p);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{p} = {v} must be a positive time constant")));
            }
        }
        Ok(())
    }

    /// Controller poles: `-1/T_w`, `-1/T_2`, `-1/T_4`.
    pub fn poles(&self) -> [f64; 3] {
        [-1.0 / self.t_w, -1.0 / self.t_2, -1.0 / self.t_4]
    }

    /// Frequency response `G(s)`.
    pub fn response(&self, s: Complex64) -> Result<Complex64> {
        self.validate()?;
        for pole in self.poles() {
            if (s - pole).norm() <= 1e-9 * pole.abs().max(1.0) {
                return Err(Error::ControllerPole { point: s.to_string() });
            }
        }
        let one = Complex64::new(1.0, 0.0);
        let washout = s * self.t_w / (one + s * self.t_w);
        let stage1 = (one + s * self.t_1) / (one + s * self.t_2);
        let stage2 = (one + s * self.t_3) / (one + s * self.t_4);
        Ok(washout * stage1 * stage2 * self.k_m)
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Parameter boxes for the five tunable controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerBounds {
    pub k_m: Interval,
    pub t_1: Interval,
    pub t_2: Interval,
    pub t_3: Interval,
    pub t_4: Interval,
}

impl Default for ControllerBounds {
    fn default() -> Self {
        Self {
            k_m: Interval::new(1.0, 30.0),
            t_1: Interval::new(0.1, 1.0),
            t_2: Interval::new(0.01, 0.1),
            t_3: Interval::new(0.1, 1.0),
            t_4: Interval::new(0.01, 0.1),
        }
    }
}

impl ControllerBounds {
    pub fn get(&self, p: Param) -> Option<Interval> {
        match p {
            Param::Km => Some(self.k_m),
            Param::T1 => Some(self.t_1),
            Param::T2 => Some(self.t_2),
            Param::T3 => Some(self.t_3),
            Param::T4 => Some(self.t_4),
            Param::Tw => None,
        }
    }

    pub fn contains(&self, params: &ControllerParams) -> bool {
        Param::TUNABLE
            .iter()
            .all(|&p| self.get(p).map_or(true, |iv| iv.contains(params.get(p))))
    }
}

/// Three-state realization of the controller transfer function
/// (washout, then the two lead-lag stages, then the gain).
pub fn realize_controller(params: &ControllerParams) -> Result<StateSpaceModel> {
    params.validate()?;
    let ControllerParams { k_m, t_1, t_2, t_3, t_4, t_w } = *params;

    // Each stage is tracked as (state row of its output, feedthrough).
    let mut a = DMatrix::zeros(3, 3);
    let mut b = DMatrix::zeros(3, 1);

    // washout: x1' = -x1/T_w + u, y1 = u - x1/T_w
    a[(0, 0)] = -1.0 / t_w;
    b[(0, 0)] = 1.0;
    let mut c_out = RowDVector::from_row_slice(&[-1.0 / t_w, 0.0, 0.0]);
    let mut d_out = 1.0;

    // lead-lag (1 + sT_a)/(1 + sT_b) driven by the previous stage:
    // x' = (v - x)/T_b, y = (T_a/T_b) v + (1 - T_a/T_b) x
    for (k, (ta, tb)) in [(t_1, t_2), (t_3, t_4)].into_iter().enumerate() {
        let row = k + 1;
        for j in 0..3 {
            a[(row, j)] += c_out[j] / tb;
        }
        a[(row, row)] -= 1.0 / tb;
        b[(row, 0)] += d_out / tb;
        let ratio = ta / tb;
        c_out *= ratio;
        c_out[row] += 1.0 - ratio;
        d_out *= ratio;
    }

    let c = DMatrix::from_row_slice(1, 3, (c_out * k_m).as_slice());
    let d = DMatrix::from_element(1, 1, k_m * d_out);
    StateSpaceModel::with_names(
        a,
        b,
        c,
        d,
        vec!["washout".into(), "lead_lag_1".into(), "lead_lag_2".into()],
        vec!["signal".into()],
        vec!["stabilizer".into()],
    )
}

/// Negative-feedback interconnection: plant output `output_channel` drives
/// the controller, whose output is subtracted at plant input `input_channel`.
///
/// The closed loop keeps every plant input and output as an external
/// channel; its state is `[x_plant; x_controller]`.
pub fn close_loop(
    plant: &StateSpaceModel,
    controller: &StateSpaceModel,
    input_channel: usize,
    output_channel: usize,
) -> Result<StateSpaceModel> {
    plant.check_channels(input_channel, output_channel)?;
    if controller.n_inputs() != 1 || controller.n_outputs() != 1 {
        return Err(Error::InvalidModel("controller must be single-input single-output".into()));
    }
    let (np, nc) = (plant.n_states(), controller.n_states());
    let (m, p) = (plant.n_inputs(), plant.n_outputs());
    let (j, k) = (input_channel, output_channel);
    let dc = controller.d[(0, 0)];
    let dkj = plant.d[(k, j)];
    let eps = 1.0 + dkj * dc;
    if eps.abs() < 1e-12 {
        return Err(Error::IllPosedLoop { input: j, output: k });
    }
    let n = np + nc;

    // y_k = yx · x + yr · r
    let mut yx = RowDVector::zeros(n);
    for s in 0..np {
        yx[s] = plant.c[(k, s)] / eps;
    }
    for s in 0..nc {
        yx[np + s] = -dkj * controller.c[(0, s)] / eps;
    }
    let yr = RowDVector::from_fn(m, |_, i| plant.d[(k, i)] / eps);

    // controller output z = zx · x + zr · r
    let mut zx = RowDVector::zeros(n);
    for s in 0..np {
        zx[s] = dc * plant.c[(k, s)] / eps;
    }
    for s in 0..nc {
        zx[np + s] = controller.c[(0, s)] / eps;
    }
    let zr = &yr * dc;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (np, np)).copy_from(&plant.a);
    a.view_mut((np, np), (nc, nc)).copy_from(&controller.a);
    let bj = plant.b.column(j).into_owned();
    let bc = controller.b.column(0).into_owned();
    let mut top = a.rows_mut(0, np);
    top -= &bj * &zx;
    let mut bottom = a.rows_mut(np, nc);
    bottom += &bc * &yx;

    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (np, m)).copy_from(&(&plant.b - &bj * &zr));
    b.view_mut((np, 0), (nc, m)).copy_from(&(&bc * &yr));

    let dj = plant.d.column(j).into_owned();
    let mut c = DMatrix::zeros(p, n);
    c.view_mut((0, 0), (p, np)).copy_from(&plant.c);
    c -= &dj * &zx;
    let d = &plant.d - &dj * &zr;

    let mut states = plant.state_names.clone();
    states.extend(controller.state_names.iter().map(|s| format!("ctrl.{s}")));
    StateSpaceModel::with_names(a, b, c, d, states, plant.input_names.clone(), plant.output_names.clone())
}

/// Sampled unit-step response on one input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResponse {
    pub time: Vec<f64>,
    pub output_names: Vec<String>,
    /// `outputs[k][t]`: output `k` at sample `t`.
    pub outputs: Vec<Vec<f64>>,
    pub diverging: bool,
}

/// Unit-step response by exact zero-order-hold discretization.
pub fn step_response(model: &StateSpaceModel, input: usize, horizon_s: f64, dt_s: f64) -> Result<StepResponse> {
    if !(dt_s > 0.0 && dt_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt_s} must be positive")));
    }
    if !(horizon_s >= dt_s && horizon_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon_s} must be at least dt")));
    }
    if input >= model.n_inputs() {
        return Err(Error::IndexOutOfRange(format!("input {input} of {}", model.n_inputs())));
    }
    let n = model.n_states();
    let steps = (horizon_s / dt_s + 1e-9).floor() as usize;

    // exp([[A, b], [0, 0]] dt) = [[Φ, Γ], [0, 1]]
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, 1)).copy_from(&model.b.column(input));
    let expm = (aug * dt_s).exp();
    let phi = expm.view((0, 0), (n, n)).into_owned();
    let gamma = expm.view((0, n), (n, 1)).into_owned();

    let d_col = model.d.column(input).into_owned();
    let mut x = DVector::zeros(n);
    let mut time = Vec::with_capacity(steps + 1);
    let mut outputs = vec![Vec::with_capacity(steps + 1); model.n_outputs()];
    let mut diverging = false;
    for step in 0..=steps {
        let y = &model.c * &x + &d_col;
        for (k, out) in outputs.iter_mut().enumerate() {
            diverging |= !(y[k].abs() <= DIVERGENCE_LIMIT);
            out.push(y[k]);
        }
        time.push(step as f64 * dt_s);
        x = &phi * &x + &gamma;
    }
    Ok(StepResponse { time, output_names: model.output_names.clone(), outputs, diverging })
}
