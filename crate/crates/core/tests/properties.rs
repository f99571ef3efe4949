use drdamp::dro::{self, AmbiguitySet};
use drdamp::pce::{self, Standardization};
use drdamp::poly::Polynomial;
use drdamp::sslin::Interval;
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_is_symmetric_and_zero_on_permutations(p in samples(), q in samples()) {
        let a = dro::w1_distance(&p, &q).unwrap();
        let b = dro::w1_distance(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 0.0);
        let mut r = p.clone();
        r.reverse();
        prop_assert_eq!(dro::w1_distance(&p, &r).unwrap(), 0.0);
    }

    #[test]
    fn w1_triangle_inequality(p in samples(), q in samples(), r in samples()) {
        let pq = dro::w1_distance(&p, &q).unwrap();
        let qr = dro::w1_distance(&q, &r).unwrap();
        let pr = dro::w1_distance(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
    }

    #[test]
    fn worst_case_bounds(
        coeffs in prop::collection::vec(-0.2f64..0.2, 1..6),
        xs in prop::collection::vec(-0.9f64..0.9, 2..30),
        delta in 0.0f64..0.4,
    ) {
        let g = Polynomial::new(coeffs);
        let set = AmbiguitySet::with_radius(xs.clone(), delta, 0.03, 0.0, Interval::new(-1.0, 1.0)).unwrap();
        let w = dro::worst_case_polynomial(&g, &set).unwrap();
        // empirical mean is feasible, so it bounds the infimum from above
        prop_assert!(w.value <= w.empirical_mean + 1e-12);
        // the support minimum bounds it from below
        let support_min = g
            .derivative()
            .real_roots_in(-1.0, 1.0)
            .into_iter()
            .chain([-1.0, 1.0])
            .map(|x| g.eval(x))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(w.value >= support_min - 1e-9);
        prop_assert!(w.transport <= delta + 1e-6);
        prop_assert!((w.primal_value - w.value).abs() < 1e-7);
        let shrunk = dro::worst_case_polynomial(&g, &set.with_new_radius(delta / 2.0)).unwrap();
        prop_assert!(shrunk.value >= w.value - 1e-12);
    }

    #[test]
    fn pce_recovers_random_quartics(c in prop::collection::vec(-1.0f64..1.0, 5), mu in -0.5f64..0.5, sigma in 0.05f64..1.0) {
        let st = Standardization::new(vec![mu], vec![sigma], None).unwrap();
        let f = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x.powi(3) + c[4] * x.powi(4);
        let xi = pce::normal_design(30, 1, 11, None);
        let y: Vec<f64> = xi.iter().map(|p| f(st.invert(p)[0])).collect();
        let s = pce::fit(&xi, &y, 4, st).unwrap();
        let raw = s.to_raw_polynomial_1d().unwrap();
        let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for x in [-1.0, -0.3, 0.0, 0.4, 1.0] {
            prop_assert!((raw.eval(x) - f(x)).abs() < 1e-8 * scale.max(1.0 / sigma.powi(4)));
        }
    }
}
