//! Variance-based sensitivity analysis: Saltelli designs, first-order
//! (Saltelli) and total (Jansen) indices, and the controller-parameter
//! screening used to pick decision variables.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sslin::{ControllerBounds, ControllerParams, Interval, Param};
use crate::testbed::{DampingMap, TestbedConfig};

/// Variance below which the output is treated as constant.
pub const MIN_VARIANCE: f64 = 1e-14;
/// Largest fraction of base rows that may be dropped as infeasible.
pub const MAX_DROP_FRACTION: f64 = 0.01;

/// Saltelli design: blocks `A`, `B`, then `A_B^(i)` for each parameter
/// (`A` with column `i` taken from `B`), each `n_base` rows long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolDesign {
    pub names: Vec<String>,
    pub bounds: Vec<Interval>,
    pub n_base: usize,
    /// `n_base · (d + 2)` rows of raw (un-normalized) coordinates.
    pub points: Vec<Vec<f64>>,
}

impl SobolDesign {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row index of base row `j` in block `A` (0), `B` (1) or `A_B^(i)` (`2 + i`).
    pub fn row(&self, block: usize, j: usize) -> usize {
        block * self.n_base + j
    }

    /// Rebuilds a design from its rows; bounds become the bounding box.
    pub fn from_points(names: Vec<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let d = names.len();
        if d == 0 || points.is_empty() || points.len() % (d + 2) != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} rows cannot form a Saltelli design over {d} parameters",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|p| p.len() != d) {
            return Err(Error::Malformed { line: bad + 2, message: format!("expected {d} coordinates") });
        }
        let bounds = (0..d)
            .map(|i| {
                let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            })
            .collect();
        Ok(Self { n_base: points.len() / (d + 2), names, bounds, points })
    }
}

/// Uniform Saltelli design on the parameter box, drawn on the unit cube and
/// mapped affinely.
pub fn saltelli_sample(names: &[String], bounds: &[Interval], n_base: usize, seed: u64) -> Result<SobolDesign> {
    if names.len() != bounds.len() || names.is_empty() {
        return Err(Error::InvalidParameter("need one bound per parameter".into()));
    }
    if n_base < 2 {
        return Err(Error::InvalidParameter(format!("n_base = {n_base} must be at least 2")));
    }
    for (name, b) in names.iter().zip(bounds) {
        if !(b.lo.is_finite() && b.hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("bounds of {name} are not finite")));
        }
        if b.hi <= b.lo {
            return Err(Error::InvalidParameter(format!("degenerate bounds [{}, {}] for {name}", b.lo, b.hi)));
        }
    }
    let d = names.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut unit = || -> Vec<Vec<f64>> {
        (0..n_base).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    };
    let a = unit();
    let b = unit();
    let scale = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(x, iv)| iv.lo + x * iv.width()).collect() };

    let mut points = Vec::with_capacity(n_base * (d + 2));
    points.extend(a.iter().map(|r| scale(r)));
    points.extend(b.iter().map(|r| scale(r)));
    for i in 0..d {
        for j in 0..n_base {
            let mut r = a[j].clone();
            r[i] = b[j][i];
            points.push(scale(&r));
        }
    }
    Ok(SobolDesign { names: names.to_vec(), bounds: bounds.to_vec(), n_base, points })
}

/// First-order and total indices per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub names: Vec<String>,
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    /// Base rows used after dropping failed evaluations.
    pub n_used: usize,
    pub variance: f64,
    pub dropped_rows: usize,
    pub warnings: Vec<String>,
}

/// Indices from a complete set of evaluations aligned with the design.
pub fn indices(design: &SobolDesign, evaluations: &[f64]) -> Result<SobolResult> {
    if evaluations.len() != design.len() {
        return Err(Error::InvalidParameter(format!(
            "{} evaluations for {} design points",
            evaluations.len(),
            design.len()
        )));
    }
    if let Some(k) = evaluations.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("evaluation {k} is not finite")));
    }
    let opt: Vec<Option<f64>> = evaluations.iter().map(|v| Some(*v)).collect();
    indices_with_failures(design, &opt)
}

/// Like [`indices`], but failed evaluations (`None` or non-finite) drop the
/// whole base row from every block so the pairing is preserved.
pub fn indices_with_failures(design: &SobolDesign, evaluations: &[Option<f64>]) -> Result<SobolResult> {
    let (n, d) = (design.n_base, design.dim());
    if evaluations.len() != design.len() {
        return Err(Error::InvalidParameter(format!(
            "{} evaluations for {} design points",
            evaluations.len(),
            design.len()
        )));
    }
    let ok = |k: usize| evaluations[k].filter(|v| v.is_finite());
    let rows: Vec<usize> = (0..n).filter(|&j| (0..d + 2).all(|blk| ok(design.row(blk, j)).is_some())).collect();
    let dropped = n - rows.len();
    if dropped as f64 > MAX_DROP_FRACTION * n as f64 {
        return Err(Error::TooManyInfeasible { dropped, total: n });
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} of {n} design rows with failed evaluations"));
    }
    let m = rows.len();
    let f = |blk: usize, j: usize| ok(design.row(blk, j)).unwrap_or(f64::NAN);
    let fa: Vec<f64> = rows.iter().map(|&j| f(0, j)).collect();
    let fb: Vec<f64> = rows.iter().map(|&j| f(1, j)).collect();

    let pooled: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let variance = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pooled.len() as f64;
    if !(variance >= MIN_VARIANCE) {
        return Err(Error::ConstantOutput);
    }

    let mut first_order = Vec::with_capacity(d);
    let mut total = Vec::with_capacity(d);
    for i in 0..d {
        let fab: Vec<f64> = rows.iter().map(|&j| f(2 + i, j)).collect();
        // centring f_B leaves the estimator unbiased and cuts its variance
        let s1 = (0..m).map(|k| (fb[k] - mean) * (fab[k] - fa[k])).sum::<f64>() / m as f64 / variance;
        let st = (0..m).map(|k| (fa[k] - fab[k]).powi(2)).sum::<f64>() / (2.0 * m as f64) / variance;
        first_order.push(s1);
        total.push(st);
    }
    Ok(SobolResult { names: design.names.clone(), first_order, total, n_used: m, variance, dropped_rows: dropped, warnings })
}

/// One entry of a parameter ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedParam {
    pub param: Param,
    pub first_order: f64,
    pub total: f64,
}

/// Parameters sorted by descending total index, plus the selected top-k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub ranked: Vec<RankedParam>,
    pub selected: Vec<Param>,
    pub result: SobolResult,
}

/// Screens the five tunable controller parameters by their influence on the
/// nominal (`e = 0`) critical-mode damping.
pub fn rank_parameters(
    config: &TestbedConfig,
    bounds: &ControllerBounds,
    base: &ControllerParams,
    n_base: usize,
    seed: u64,
    top_k: usize,
) -> Result<Ranking> {
    let params = Param::TUNABLE;
    let names: Vec<String> = params.iter().map(|p| p.name().to_string()).collect();
    let boxes: Vec<Interval> = params.iter().map(|p| bounds.get(*p).expect("tunable parameter has bounds")).collect();
    let design = saltelli_sample(&names, &boxes, n_base, seed)?;
    let evals: Vec<Option<f64>> = design
        .points
        .par_iter()
        .map(|row| {
            let mut p = *base;
            for (param, v) in params.iter().zip(row) {
                p.set(*param, *v);
            }
            DampingMap::new(config, &p).and_then(|m| m.eval(0.0)).ok()
        })
        .collect();
    let result = indices_with_failures(&design, &evals)?;
    let mut ranked: Vec<RankedParam> = params
        .iter()
        .enumerate()
        .map(|(i, p)| RankedParam { param: *p, first_order: result.first_order[i], total: result.total[i] })
        .collect();
    ranked.sort_by(|a, b| b.total.total_cmp(&a.total));
    let selected = ranked.iter().take(top_k.min(ranked.len())).map(|r| r.param).collect();
    Ok(Ranking { ranked, selected, result })
}

/// Writes one row per design point: parameter columns then `f`.
pub fn write_design_csv(path: &Path, design: &SobolDesign, evaluations: &[f64]) -> Result<()> {
    if evaluations.len() != design.len() {
        return Err(Error::InvalidParameter("evaluations not aligned with design".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = design.names.clone();
    header.push("f".into());
    w.write_record(&header)?;
    for (row, f) in design.points.iter().zip(evaluations) {
        let mut rec: Vec<String> = row.iter().map(|v| crate::fmt_csv_f64(*v)).collect();
        rec.push(crate::fmt_csv_f64(*f));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a design CSV written by [`write_design_csv`].
pub fn read_design_csv(path: &Path) -> Result<(SobolDesign, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.last().map(String::as_str) != Some("f") || header.len() < 2 {
        return Err(Error::Malformed { line: 1, message: "expected parameter columns followed by `f`".into() });
    }
    let d = header.len() - 1;
    let mut points = Vec::new();
    let mut evals = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Malformed { line: k + 2, message: e.to_string() })?;
        if vals.len() != d + 1 {
            return Err(Error::Malformed { line: k + 2, message: format!("expected {} fields", d + 1) });
        }
        evals.push(vals[d]);
        points.push(vals[..d].to_vec());
    }
    let design = SobolDesign::from_points(header[..d].to_vec(), points)?;
    Ok((design, evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("z{i}")).collect()
    }

    fn run(design: &SobolDesign, f: impl Fn(&[f64]) -> f64) -> SobolResult {
        let evals: Vec<f64> = design.points.iter().map(|p| f(p)).collect();
        indices(design, &evals).unwrap()
    }

    #[test]
    fn design_size_and_range() {
        let b = vec![Interval::new(0.0, 1.0); 2];
        let d = saltelli_sample(&names(2), &b, 4, 1).unwrap();
        assert_eq!(d.len(), 16);
        assert!(d.points.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(d, saltelli_sample(&names(2), &b, 4, 1).unwrap());
        // A_B^(i) takes column i from B and the rest from A
        for j in 0..4 {
            assert_eq!(d.points[d.row(2, j)][0], d.points[d.row(1, j)][0]);
            assert_eq!(d.points[d.row(2, j)][1], d.points[d.row(0, j)][1]);
        }
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let b = vec![Interval::new(0.0, 1.0), Interval::new(2.0, 2.0)];
        let err = saltelli_sample(&names(2), &b, 8, 1).unwrap_err();
        assert!(err.to_string().contains("z2"));
    }

    #[test]
    fn single_variable_function() {
        let b = vec![Interval::new(0.0, 1.0); 2];
        let d = saltelli_sample(&names(2), &b, 4096, 3).unwrap();
        let r = run(&d, |z| z[0]);
        assert!((r.total[0] - 1.0).abs() < 0.05);
        assert!(r.total[1].abs() < 0.05);
        assert!((r.first_order[0] - r.total[0]).abs() < 0.05);
    }

    #[test]
    fn constant_output_is_an_error() {
        let b = vec![Interval::new(0.0, 1.0); 2];
        let d = saltelli_sample(&names(2), &b, 16, 3).unwrap();
        let evals = vec![0.5; d.len()];
        assert!(matches!(indices(&d, &evals), Err(Error::ConstantOutput)));
    }

    #[test]
    fn ishigami_against_analytic_decomposition() {
        let (a, b) = (7.0, 0.1);
        let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        let expect = [(v1 + v13) / v, v2 / v, v13 / v];

        let bounds = vec![Interval::new(-PI, PI); 3];
        let d = saltelli_sample(&names(3), &bounds, 16384, 11).unwrap();
        let r = run(&d, |x| x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin());
        for i in 0..3 {
            assert!((r.total[i] - expect[i]).abs() < 0.05, "S_T{} = {} vs {}", i + 1, r.total[i], expect[i]);
            assert!(r.total[i] >= r.first_order[i] - 0.05);
        }
        assert!(r.first_order.iter().sum::<f64>() <= 1.05);
    }

    #[test]
    fn additive_function_first_equals_total() {
        let bounds = vec![Interval::new(0.0, 1.0); 3];
        let d = saltelli_sample(&names(3), &bounds, 8192, 5).unwrap();
        let r = run(&d, |z| z[0] + 2.0 * z[1].powi(2) + (3.0 * z[2]).sin());
        for i in 0..3 {
            assert!((r.first_order[i] - r.total[i]).abs() < 0.05);
        }
    }

    #[test]
    fn symmetric_inputs_get_equal_indices() {
        let bounds = vec![Interval::new(0.0, 1.0); 3];
        let d = saltelli_sample(&names(3), &bounds, 4096, 9).unwrap();
        let r = run(&d, |z| (z[0] + z[1]).powi(2) + 0.3 * z[2]);
        assert!((r.total[0] - r.total[1]).abs() < 0.05);
    }

    #[test]
    fn invariant_under_bound_rescaling() {
        let g = |u: &[f64]| u[0] * u[1] + u[0].powi(3);
        let unit = vec![Interval::new(0.0, 1.0); 2];
        let wide = vec![Interval::new(0.0, 10.0), Interval::new(0.0, 1.0)];
        let a = run(&saltelli_sample(&names(2), &unit, 2048, 4).unwrap(), |z| g(z));
        let b = run(&saltelli_sample(&names(2), &wide, 2048, 4).unwrap(), |z| g(&[z[0] / 10.0, z[1]]));
        for i in 0..2 {
            assert!((a.total[i] - b.total[i]).abs() < 0.05);
        }
    }

    #[test]
    fn dropped_rows_preserve_pairing() {
        let bounds = vec![Interval::new(0.0, 1.0); 2];
        let d = saltelli_sample(&names(2), &bounds, 1000, 2).unwrap();
        let mut evals: Vec<Option<f64>> = d.points.iter().map(|p| Some(p[0] + p[1])).collect();
        evals[d.row(3, 17)] = None;
        let r = indices_with_failures(&d, &evals).unwrap();
        assert_eq!(r.dropped_rows, 1);
        assert_eq!(r.n_used, 999);
        assert_eq!(r.warnings.len(), 1);
        for j in 0..20 {
            evals[d.row(0, j)] = None;
        }
        assert!(matches!(indices_with_failures(&d, &evals), Err(Error::TooManyInfeasible { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let bounds = vec![Interval::new(-1.0, 2.0), Interval::new(0.5, 0.7)];
        let d = saltelli_sample(&names(2), &bounds, 8, 1).unwrap();
        let evals: Vec<f64> = d.points.iter().map(|p| p[0] * p[1] / 3.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        write_design_csv(&path, &d, &evals).unwrap();
        let (back, ev) = read_design_csv(&path).unwrap();
        assert_eq!(back.points, d.points);
        assert_eq!(back.n_base, 8);
        assert_eq!(ev, evals);
        assert_eq!(indices(&back, &ev).unwrap().total, indices(&d, &evals).unwrap().total);
    }

    #[test]
    fn testbed_ranking_is_deterministic() {
        let cfg = TestbedConfig::default();
        let base = ControllerParams::default();
        let bounds = ControllerBounds::default();
        let a = rank_parameters(&cfg, &bounds, &base, 256, 42, 2).unwrap();
        let b = rank_parameters(&cfg, &bounds, &base, 256, 42, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected.len(), 2);
        let all = rank_parameters(&cfg, &bounds, &base, 64, 42, 5).unwrap();
        assert_eq!(all.selected.len(), 5);
    }
}
