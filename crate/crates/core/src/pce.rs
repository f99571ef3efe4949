//! Hermite polynomial-chaos surrogates.
//!
//! The basis is the normalized probabilists' Hermite family
//! `ψ_k = He_k / √k!`, orthonormal under the standard normal weight, so the
//! mean of a surrogate is its constant coefficient and its variance is the
//! sum of the remaining squared coefficients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::sslin::Interval;

/// Relative singular-value floor below which a design counts as rank-deficient.
pub const RANK_TOL: f64 = 1e-12;
/// Regression condition number above which a warning is attached.
pub const CONDITION_WARN: f64 = 1e8;
/// Default ratio of design samples to basis terms.
pub const OVERSAMPLING: f64 = 2.0;

/// Total-degree multi-indices, graded; within a degree, descending
/// lexicographic (`[2,0], [1,1], [0,2]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub order: usize,
    pub indices: Vec<Vec<usize>>,
}

fn push_compositions(total: usize, dim: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if dim == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, dim - 1, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexSet {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let mut indices = Vec::new();
        for degree in 0..=order {
            push_compositions(degree, dim, &mut Vec::with_capacity(dim), &mut indices);
        }
        Ok(Self { dim, order, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `binomial(dim + order, dim)`.
    pub fn expected_len(dim: usize, order: usize) -> usize {
        (1..=dim).fold(1usize, |acc, k| acc * (order + k) / k)
    }
}

/// Probabilists' Hermite polynomial `He_k(x)`.
pub fn hermite(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `ψ_0..ψ_m` at `x`.
fn normalized_hermite_table(order: usize, x: f64) -> Vec<f64> {
    let mut he = Vec::with_capacity(order + 1);
    he.push(1.0);
    if order >= 1 {
        he.push(x);
    }
    for j in 1..order {
        he.push(x * he[j] - j as f64 * he[j - 1]);
    }
    let mut fact = 1.0;
    for (k, v) in he.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *v /= fact.sqrt();
    }
    he
}

/// Normalized Hermite polynomial `ψ_k(x) = He_k(x)/√k!`.
pub fn hermite_normalized(k: usize, x: f64) -> f64 {
    normalized_hermite_table(k, x)[k]
}

/// Affine standardization, optionally followed by decorrelation with the
/// inverse Cholesky factor of a correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Lower Cholesky factor of `correlation`.
    cholesky: Option<Vec<Vec<f64>>>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim], correlation: None, cholesky: None }
    }

    pub fn new(mean: Vec<f64>, std: Vec<f64>, correlation: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::InvalidParameter("mean and std must have equal, non-zero length".into()));
        }
        if let Some(i) = std.iter().position(|s| !(s.is_finite() && *s > 1e-12)) {
            return Err(Error::InvalidParameter(format!("std of dimension {i} is {} (must exceed 1e-12)", std[i])));
        }
        let cholesky = match &correlation {
            None => None,
            Some(c) => Some(cholesky_factor(c, mean.len())?),
        };
        Ok(Self { mean, std, correlation, cholesky })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Raw point to standardized coordinates.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect();
        match &self.cholesky {
            None => z,
            Some(l) => {
                // forward substitution L ξ = z
                let mut xi = vec![0.0; z.len()];
                for i in 0..z.len() {
                    let acc: f64 = (0..i).map(|j| l[i][j] * xi[j]).sum();
                    xi[i] = (z[i] - acc) / l[i][i];
                }
                xi
            }
        }
    }

    /// Standardized coordinates back to a raw point.
    pub fn invert(&self, xi: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = match &self.cholesky {
            None => xi.to_vec(),
            Some(l) => (0..xi.len()).map(|i| (0..=i).map(|j| l[i][j] * xi[j]).sum()).collect(),
        };
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| m + s * v).collect()
    }
}

fn cholesky_factor(c: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if c.len() != n || c.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter(format!("correlation matrix must be {n}x{n}")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| c[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    Ok((0..n).map(|i| (0..n).map(|j| l[(i, j)]).collect()).collect())
}

/// Standardizes raw samples (rows are points) by their mean and population
/// standard deviation; with `correlation`, also decorrelates.
pub fn standardize(samples: &[Vec<f64>], correlation: Option<Vec<Vec<f64>>>) -> Result<(Vec<Vec<f64>>, Standardization)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Empty("standardization needs at least two samples".into()));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidParameter("samples have inconsistent dimension".into()));
    }
    let mean: Vec<f64> = (0..dim).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    let std: Vec<f64> = (0..dim)
        .map(|i| (samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    let rec = Standardization::new(mean, std, correlation)?;
    let out = samples.iter().map(|s| rec.apply(s)).collect();
    Ok((out, rec))
}

/// Standard-normal design points; with `bounds` (in standardized units),
/// draws falling outside are redrawn.
pub fn normal_design(n: usize, dim: usize, seed: u64, bounds: Option<&[Interval]>) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|i| loop {
                    let v: f64 = rng.sample(StandardNormal);
                    match bounds {
                        Some(b) if !b[i].contains(v) => continue,
                        _ => break v,
                    }
                })
                .collect()
        })
        .collect()
}

/// Regression diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_samples: usize,
    /// Ratio of extreme singular values of the regression matrix.
    pub condition: f64,
    /// `‖Ψc − d‖₂` at the fit samples.
    pub residual_norm: f64,
    pub warnings: Vec<String>,
}

/// Truncated Hermite expansion in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceSurrogate {
    pub basis: MultiIndexSet,
    pub coefficients: Vec<f64>,
    pub standardization: Standardization,
    pub diagnostics: FitDiagnostics,
}

fn basis_row(basis: &MultiIndexSet, xi: &[f64]) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = xi.iter().map(|x| normalized_hermite_table(basis.order, *x)).collect();
    basis
        .indices
        .iter()
        .map(|alpha| alpha.iter().enumerate().map(|(j, &a)| tables[j][a]).product())
        .collect()
}

/// Least-squares fit of `responses` at standardized design points `xi`.
pub fn fit(xi: &[Vec<f64>], responses: &[f64], order: usize, standardization: Standardization) -> Result<PceSurrogate> {
    let dim = standardization.dim();
    let basis = MultiIndexSet::new(dim, order)?;
    let (n, na) = (xi.len(), basis.len());
    if responses.len() != n {
        return Err(Error::InvalidParameter(format!("{} responses for {n} design points", responses.len())));
    }
    if xi.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidParameter(format!("design points must have dimension {dim}")));
    }
    if let Some(k) = responses.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("response {k} is not finite")));
    }
    if n < na {
        return Err(Error::RankDeficient { samples: n, terms: na });
    }
    let mut warnings = Vec::new();
    if (n as f64) < OVERSAMPLING * na as f64 {
        warnings.push(format!("{n} samples for {na} terms is below the recommended oversampling of {OVERSAMPLING}"));
    }

    let psi = DMatrix::from_fn(n, na, |_, _| 0.0);
    let mut psi = psi;
    for (r, p) in xi.iter().enumerate() {
        for (c, v) in basis_row(&basis, p).into_iter().enumerate() {
            psi[(r, c)] = v;
        }
    }
    let y = DVector::from_column_slice(responses);
    let svd = psi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient { samples: n, terms: na });
    }
    let condition = smax / smin;
    if condition > CONDITION_WARN {
        warnings.push(format!("regression condition estimate {condition:.3e} exceeds {CONDITION_WARN:.0e}"));
    }
    let c = svd.solve(&y, 0.0).map_err(|e| Error::InvalidModel(e.to_string()))?;
    let residual_norm = (&psi * &c - &y).norm();
    Ok(PceSurrogate {
        basis,
        coefficients: c.iter().copied().collect(),
        standardization,
        diagnostics: FitDiagnostics { n_samples: n, condition, residual_norm, warnings },
    })
}

impl PceSurrogate {
    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    /// Value at a standardized point.
    pub fn evaluate_xi(&self, xi: &[f64]) -> f64 {
        basis_row(&self.basis, xi).iter().zip(&self.coefficients).map(|(p, c)| p * c).sum()
    }

    /// Value at a raw disturbance point.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_xi(&self.standardization.apply(x))
    }

    /// `(mean, variance)` under the standard-normal reference measure.
    pub fn moments(&self) -> (f64, f64) {
        (self.coefficients[0], self.coefficients[1..].iter().map(|c| c * c).sum())
    }

    /// The 1-D expansion as a power series in the standardized variable.
    pub fn to_monomial_1d(&self) -> Result<Polynomial> {
        if self.dim() != 1 {
            return Err(Error::InvalidParameter(format!("surrogate has dimension {}, expected 1", self.dim())));
        }
        let m = self.order();
        // He_k in power-basis coefficients, built by the recurrence
        let mut he: Vec<Vec<f64>> = vec![vec![1.0]];
        if m >= 1 {
            he.push(vec![0.0, 1.0]);
        }
        for j in 1..m {
            let mut next = vec![0.0; j + 2];
            for (p, v) in he[j].iter().enumerate() {
                next[p + 1] += v;
            }
            for (p, v) in he[j - 1].iter().enumerate() {
                next[p] -= j as f64 * v;
            }
            he.push(next);
        }
        let mut coeffs = vec![0.0; m + 1];
        let mut fact = 1.0;
        for (k, c) in self.coefficients.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let degree = self.basis.indices[k][0];
            let scale = c / fact.sqrt();
            for (p, v) in he[degree].iter().enumerate() {
                coeffs[p] += scale * v;
            }
        }
        Ok(Polynomial::new(coeffs))
    }

    /// The 1-D expansion as a power series in the raw variable.
    pub fn to_raw_polynomial_1d(&self) -> Result<Polynomial> {
        if self.standardization.correlation.is_some() {
            return Err(Error::InvalidParameter("1-D surrogate cannot carry a correlation".into()));
        }
        let (mu, sigma) = (self.standardization.mean[0], self.standardization.std[0]);
        Ok(self.to_monomial_1d()?.compose_affine(1.0 / sigma, -mu / sigma))
    }
}

/// Monte-Carlo distribution of a surrogate's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub n_samples: usize,
    pub bin_centers: Vec<f64>,
    pub bin_width: f64,
    /// Fraction of samples per bin; sums to one.
    pub mass: Vec<f64>,
    /// Kernel density evaluated at the bin centres.
    pub density: Vec<f64>,
    /// Kernel density on a grid extending four bandwidths past the data.
    pub curve_x: Vec<f64>,
    pub curve_density: Vec<f64>,
    pub bandwidth: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of samples with negative value.
    pub negative_mass: f64,
}

const CURVE_POINTS: usize = 512;

/// Histogram plus Gaussian kernel density (Silverman bandwidth) of the
/// surrogate output under standard-normal inputs.
pub fn pdf_mc(surrogate: &PceSurrogate, n_samples: usize, seed: u64, n_bins: usize) -> Result<PdfEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!("n_samples = {n_samples} must be at least 1000")));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be positive".into()));
    }
    let xs = normal_design(n_samples, surrogate.dim(), seed, None);
    let mut values: Vec<f64> = xs.iter().map(|x| surrogate.evaluate_xi(x)).collect();
    values.sort_by(f64::total_cmp);
    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (min, max) = (values[0], values[n_samples - 1]);
    let negative_mass = values.iter().filter(|v| **v < 0.0).count() as f64 / n;

    let spread = max - min;
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(PdfEstimate {
            n_samples,
            bin_centers: vec![mean],
            bin_width: 0.0,
            mass: vec![1.0],
            density: vec![f64::INFINITY],
            curve_x: Vec::new(),
            curve_density: Vec::new(),
            bandwidth: 0.0,
            mean,
            std: 0.0,
            min,
            max,
            negative_mass,
        });
    }

    let width = spread / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for v in &values {
        let k = (((v - min) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let mass: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let bin_centers: Vec<f64> = (0..n_bins).map(|k| min + (k as f64 + 0.5) * width).collect();

    let q = |p: f64| values[((p * (n - 1.0)).round() as usize).min(n_samples - 1)];
    let iqr = q(0.75) - q(0.25);
    let scale = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let bandwidth = 0.9 * scale * n.powf(-0.2);
    let kde = |x: f64| {
        let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        values.iter().map(|v| (-0.5 * ((x - v) / bandwidth).powi(2)).exp()).sum::<f64>() * norm
    };
    let density = bin_centers.iter().map(|x| kde(*x)).collect();
    let (lo, hi) = (min - 4.0 * bandwidth, max + 4.0 * bandwidth);
    let curve_x: Vec<f64> = (0..CURVE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64).collect();
    let curve_density = curve_x.iter().map(|x| kde(*x)).collect();

    Ok(PdfEstimate {
        n_samples,
        bin_centers,
        bin_width: width,
        mass,
        density,
        curve_x,
        curve_density,
        bandwidth,
        mean,
        std,
        min,
        max,
        negative_mass,
    })
}

/// Validation errors of a surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub aae: f64,
    pub n_validation: usize,
}

/// RMSE and average absolute error at raw validation points.
pub fn error_metrics(surrogate: &PceSurrogate, points: &[Vec<f64>], responses: &[f64]) -> Result<ErrorReport> {
    if points.is_empty() {
        return Err(Error::Empty("validation set is empty".into()));
    }
    if points.len() != responses.len() {
        return Err(Error::InvalidParameter("validation points and responses differ in length".into()));
    }
    if points.len() < 2 {
        return Err(Error::InvalidParameter("at least two validation points are required".into()));
    }
    let n = points.len() as f64;
    let errs: Vec<f64> = points.iter().zip(responses).map(|(p, d)| surrogate.evaluate(p) - d).collect();
    Ok(ErrorReport {
        rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        aae: errs.iter().map(|e| e.abs()).sum::<f64>() / n,
        n_validation: points.len(),
    })
}

/// Writes the histogram/density table (`bin_center,mass,density`).
pub fn write_pdf_csv(path: &std::path::Path, pdf: &PdfEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_center", "mass", "density"])?;
    for k in 0..pdf.mass.len() {
        w.write_record([
            crate::fmt_csv_f64(pdf.bin_centers[k]),
            crate::fmt_csv_f64(pdf.mass[k]),
            crate::fmt_csv_f64(pdf.density[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the smooth density curve (`x,density`).
pub fn write_density_curve_csv(path: &std::path::Path, pdf: &PdfEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "density"])?;
    for (x, d) in pdf.curve_x.iter().zip(&pdf.curve_density) {
        w.write_record([crate::fmt_csv_f64(*x), crate::fmt_csv_f64(*d)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Probabilists' Gauss–Hermite rule by Golub–Welsch.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let j = DMatrix::from_fn(n, n, |r, c| if r + 1 == c || c + 1 == r { (r.max(c) as f64).sqrt() } else { 0.0 });
        let eig = j.symmetric_eigen();
        let nodes = eig.eigenvalues.iter().copied().collect();
        let weights = (0..n).map(|k| eig.eigenvectors[(0, k)].powi(2)).collect();
        (nodes, weights)
    }

    fn one_d(xi: &[f64]) -> Vec<Vec<f64>> {
        xi.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 0.7), 1.0);
        assert_eq!(hermite(1, 0.7), 0.7);
        assert_eq!(hermite(2, 2.0), 3.0);
        assert_eq!(hermite(3, 2.0), 2.0);
        assert!((hermite_normalized(2, 2.0) - 3.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let (x, w) = gauss_hermite(10);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        for j in 0..=6 {
            for k in 0..=6 {
                let v: f64 = x.iter().zip(&w).map(|(x, w)| w * hermite_normalized(j, *x) * hermite_normalized(k, *x)).sum();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((v - target).abs() < 1e-10, "({j},{k}) -> {v}");
            }
        }
    }

    #[test]
    fn multi_index_order_and_count() {
        let s = MultiIndexSet::new(2, 2).unwrap();
        assert_eq!(s.indices, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        for (n, m) in [(1, 4), (2, 4), (3, 3), (4, 2)] {
            assert_eq!(MultiIndexSet::new(n, m).unwrap().len(), MultiIndexSet::expected_len(n, m));
        }
        assert_eq!(MultiIndexSet::expected_len(3, 3), 20);
    }

    #[test]
    fn constant_response() {
        let xi = one_d(&normal_design(20, 1, 1, None).concat());
        let s = fit(&xi, &vec![0.015; 20], 3, Standardization::identity(1)).unwrap();
        assert!((s.coefficients[0] - 0.015).abs() < 1e-10);
        assert!(s.coefficients[1..].iter().all(|c| c.abs() < 1e-10));
        assert_eq!(s.moments().1, s.coefficients[1..].iter().map(|c| c * c).sum::<f64>());
        assert!((s.evaluate(&[3.3]) - 0.015).abs() < 1e-10);
        let pdf = pdf_mc(&s, 2000, 3, 20).unwrap();
        assert!(pdf.mass.len() <= 1 || pdf.mass.iter().filter(|m| **m > 0.0).count() <= 1 || pdf.std < 1e-9);
    }

    #[test]
    fn square_response_coefficients_and_moments() {
        let pts = normal_design(40, 1, 2, None);
        let y: Vec<f64> = pts.iter().map(|p| p[0] * p[0]).collect();
        let s = fit(&pts, &y, 4, Standardization::identity(1)).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((s.coefficients[2] - 2f64.sqrt()).abs() < 1e-10);
        assert!(s.diagnostics.residual_norm < 1e-10);
        let (mean, var) = s.moments();
        assert!((mean - 1.0).abs() < 1e-10 && (var - 2.0).abs() < 1e-9);
        assert!((s.evaluate_xi(&[2.0]) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn raw_evaluation_uses_standardization() {
        let rec = Standardization::new(vec![3.0], vec![2.0], None).unwrap();
        let pts = normal_design(30, 1, 5, None);
        let y: Vec<f64> = pts.iter().map(|p| p[0] * p[0]).collect();
        let s = fit(&pts, &y, 2, rec).unwrap();
        // raw 7 maps to ξ = 2
        assert!((s.evaluate(&[7.0]) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn polynomial_reproduction_2d() {
        let pts = normal_design(60, 2, 8, None);
        let f = |x: &[f64]| 0.3 - x[0] + 0.5 * x[0] * x[1].powi(2) + x[1].powi(4) / 7.0;
        let y: Vec<f64> = pts.iter().map(|p| f(p)).collect();
        let s = fit(&pts, &y, 4, Standardization::identity(2)).unwrap();
        let val = normal_design(200, 2, 9, None);
        let truth: Vec<f64> = val.iter().map(|p| f(p)).collect();
        assert!(error_metrics(&s, &val, &truth).unwrap().rmse < 1e-8);
        // analytic coefficient of ψ_(1,2): 0.5·x·y² = 0.5·ψ1(x)·(√2 ψ2(y) + 1)
        let k = s.basis.indices.iter().position(|a| a == &vec![1, 2]).unwrap();
        assert!((s.coefficients[k] - 0.5 * 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn fit_is_linear_in_responses() {
        let pts = normal_design(30, 1, 4, None);
        let d1: Vec<f64> = pts.iter().map(|p| p[0].sin()).collect();
        let d2: Vec<f64> = pts.iter().map(|p| (0.5 * p[0]).exp()).collect();
        let mix: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let id = || Standardization::identity(1);
        let (c1, c2, cm) = (
            fit(&pts, &d1, 4, id()).unwrap().coefficients,
            fit(&pts, &d2, 4, id()).unwrap().coefficients,
            fit(&pts, &mix, 4, id()).unwrap().coefficients,
        );
        for k in 0..cm.len() {
            assert!((cm[k] - (2.0 * c1[k] - 3.0 * c2[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_matches_quadrature_of_surrogate() {
        let pts = normal_design(30, 1, 12, None);
        let y: Vec<f64> = pts.iter().map(|p| (p[0] * 0.8).tanh()).collect();
        let s = fit(&pts, &y, 4, Standardization::identity(1)).unwrap();
        let (x, w) = gauss_hermite(20);
        let m1: f64 = x.iter().zip(&w).map(|(x, w)| w * s.evaluate_xi(&[*x])).sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * s.evaluate_xi(&[*x]).powi(2)).sum();
        let (mean, var) = s.moments();
        assert!((m1 - mean).abs() < 1e-12);
        assert!((m2 - m1 * m1 - var).abs() < 1e-12);
    }

    #[test]
    fn residual_reproduced_at_fit_points() {
        let pts = normal_design(25, 1, 13, None);
        let y: Vec<f64> = pts.iter().map(|p| p[0].abs()).collect();
        let s = fit(&pts, &y, 3, Standardization::identity(1)).unwrap();
        let r = pts.iter().zip(&y).map(|(p, d)| (s.evaluate_xi(p) - d).powi(2)).sum::<f64>().sqrt();
        assert!((r - s.diagnostics.residual_norm).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let pts = one_d(&[0.1, 0.1, 0.1, 0.1, 0.1, 0.1]);
        let err = fit(&pts, &[1.0; 6], 2, Standardization::identity(1)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
        assert!(fit(&one_d(&[0.0, 1.0]), &[1.0, 2.0], 3, Standardization::identity(1)).is_err());
    }

    #[test]
    fn standardize_affine_and_correlated() {
        let z = normal_design(1000, 1, 3, None);
        let raw: Vec<Vec<f64>> = z.iter().map(|p| vec![2.0 * p[0] + 3.0]).collect();
        let (out, rec) = standardize(&raw, None).unwrap();
        let zm = z.iter().map(|p| p[0]).sum::<f64>() / 1000.0;
        let zs = (z.iter().map(|p| (p[0] - zm).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!((rec.mean[0] - (3.0 + 2.0 * zm)).abs() < 1e-12);
        assert!((rec.std[0] - 2.0 * zs).abs() < 1e-12);
        assert!((out[5][0] - (z[5][0] - zm) / zs).abs() < 1e-12);
        assert!((rec.invert(&out[5])[0] - raw[5][0]).abs() < 1e-12);

        let rho = 0.8;
        let ind = normal_design(10_000, 2, 4, None);
        let corr: Vec<Vec<f64>> = ind.iter().map(|p| vec![p[0], rho * p[0] + (1.0 - rho * rho).sqrt() * p[1]]).collect();
        let (xi, rec) = standardize(&corr, Some(vec![vec![1.0, rho], vec![rho, 1.0]])).unwrap();
        let n = xi.len() as f64;
        let m: Vec<f64> = (0..2).map(|i| xi.iter().map(|p| p[i]).sum::<f64>() / n).collect();
        let cov = xi.iter().map(|p| (p[0] - m[0]) * (p[1] - m[1])).sum::<f64>() / n;
        let s: Vec<f64> = (0..2).map(|i| (xi.iter().map(|p| (p[i] - m[i]).powi(2)).sum::<f64>() / n).sqrt()).collect();
        assert!((cov / (s[0] * s[1])).abs() < 0.05);
        let back = rec.invert(&xi[7]);
        assert!((back[0] - corr[7][0]).abs() < 1e-12 && (back[1] - corr[7][1]).abs() < 1e-12);

        let bad = Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(standardize(&corr, bad), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn monte_carlo_mean_matches_constant_term() {
        let pts = normal_design(40, 1, 21, None);
        let y: Vec<f64> = pts.iter().map(|p| 0.02 + 0.01 * p[0] - 0.004 * p[0].powi(2)).collect();
        let s = fit(&pts, &y, 4, Standardization::identity(1)).unwrap();
        let (mean, var) = s.moments();
        let n = 100_000;
        let mc: f64 = normal_design(n, 1, 77, None).iter().map(|p| s.evaluate_xi(p)).sum::<f64>() / n as f64;
        assert!((mc - mean).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn pdf_of_linear_surrogate() {
        let pts = normal_design(20, 1, 1, None);
        let y: Vec<f64> = pts.iter().map(|p| 0.03 - 0.02 * p[0]).collect();
        let s = fit(&pts, &y, 1, Standardization::identity(1)).unwrap();
        let pdf = pdf_mc(&s, 20_000, 5, 40).unwrap();
        assert_eq!(pdf, pdf_mc(&s, 20_000, 5, 40).unwrap());
        assert!((pdf.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let se = 0.02 / (20_000f64).sqrt();
        assert!((pdf.mean - 0.03).abs() < 3.0 * se);
        assert!((pdf.std - 0.02).abs() < 3.0 * 0.02 / (2.0 * 20_000f64).sqrt());
        let integral: f64 = pdf
            .curve_x
            .windows(2)
            .zip(pdf.curve_density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        assert!(pdf.negative_mass > 0.0);
    }

    #[test]
    fn error_metrics_constant_offset() {
        let pts = normal_design(20, 1, 3, None);
        let y: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let s = fit(&pts, &y, 2, Standardization::identity(1)).unwrap();
        let val = normal_design(50, 1, 4, None);
        let shifted: Vec<f64> = val.iter().map(|p| p[0] - 0.1).collect();
        let r = error_metrics(&s, &val, &shifted).unwrap();
        assert!((r.aae - 0.1).abs() < 1e-12);
        assert!(error_metrics(&s, &[], &[]).is_err());
    }

    #[test]
    fn monomial_forms_agree() {
        let rec = Standardization::new(vec![0.1], vec![0.25], None).unwrap();
        let pts = normal_design(40, 1, 6, None);
        let y: Vec<f64> = pts.iter().map(|p| (1.3 * p[0]).cos()).collect();
        let s = fit(&pts, &y, 5, rec).unwrap();
        let g = s.to_monomial_1d().unwrap();
        let raw = s.to_raw_polynomial_1d().unwrap();
        for x in [-0.9, -0.3, 0.0, 0.2, 0.8] {
            let xi = (x - 0.1) / 0.25;
            assert!((g.eval(xi) - s.evaluate_xi(&[xi])).abs() < 1e-10);
            assert!((raw.eval(x) - s.evaluate(&[x])).abs() < 1e-9);
        }
    }

    #[test]
    fn truncated_design_respects_bounds() {
        let b = [Interval::new(-1.5, 0.5)];
        let pts = normal_design(500, 1, 3, Some(&b));
        assert!(pts.iter().all(|p| b[0].contains(p[0])));
    }

    #[test]
    fn json_round_trip() {
        let pts = normal_design(30, 2, 6, None);
        let y: Vec<f64> = pts.iter().map(|p| p[0] * p[1]).collect();
        let s = fit(&pts, &y, 2, Standardization::new(vec![0.0, 1.0], vec![1.0, 2.0], None).unwrap()).unwrap();
        let back: PceSurrogate = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
