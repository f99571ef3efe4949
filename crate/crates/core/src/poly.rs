//! Dense univariate polynomials in the power basis, with exact real-root
//! isolation on bounded intervals.

/// Coefficients in ascending powers: `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Adds a constant to the polynomial.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += offset;
        Self::new(coeffs)
    }

    /// Returns `q(x) = self(scale * x + shift)`.
    pub fn compose_affine(&self, scale: f64, shift: f64) -> Self {
        // Horner in polynomial arithmetic.
        let mut acc = vec![0.0; self.coeffs.len()];
        for &c in self.coeffs.iter().rev() {
            let mut next = vec![0.0; acc.len()];
            for (k, &a) in acc.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                next[k] += a * shift;
                if k + 1 < next.len() {
                    next[k + 1] += a * scale;
                }
            }
            next[0] += c;
            acc = next;
        }
        Self::new(acc)
    }

    fn scale_of(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// All real roots in the closed interval `[lo, hi]`, sorted ascending.
    ///
    /// Roots of the derivative split the interval into monotone pieces; each
    /// piece with a sign change is bisected to machine precision. Identically
    /// zero polynomials report no roots.
    pub fn real_roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        assert!(lo <= hi, "empty interval");
        let scale = self.scale_of();
        if scale == 0.0 || self.degree() == 0 {
            return Vec::new();
        }
        if self.degree() == 1 {
            let r = -self.coeffs[0] / self.coeffs[1];
            return if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() };
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().real_roots_in(lo, hi));
        knots.push(hi);
        let zero_tol = 4.0 * f64::EPSILON * scale;
        let mut roots: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa.abs() <= zero_tol {
                roots.push(a);
            }
            if fa.signum() != fb.signum() && fa != 0.0 && fb != 0.0 {
                roots.push(self.bisect(a, b, fa));
            }
            if fb.abs() <= zero_tol {
                roots.push(b);
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
        roots
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}
