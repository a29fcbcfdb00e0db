use nlsmod::geometry::{radical_r, BranchpointSet};
use nlsmod::scattering::ScatteringData;
use nlsmod::Complex64 as C;
use proptest::prelude::*;

fn upper_points() -> impl Strategy<Value = Vec<C>> {
    // well separated upper points: distinct real parts, heights away from the axis
    let counts = prop_oneof![Just(1usize), Just(3usize)];
    (
        prop::collection::vec((-0.3f64..0.3, 0.4f64..1.5), 3),
        counts,
    )
        .prop_map(|(v, n)| {
            v.iter()
                .take(n)
                .enumerate()
                .map(|(k, (dx, y))| C::new(1.5 * k as f64 + dx, *y))
                .collect()
        })
}

fn horner(coeffs: &[f64], z: C) -> C {
    coeffs
        .iter()
        .rev()
        .fold(C::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn poly_text(coeffs: &[f64]) -> String {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| format!("({c:?})*z^{k}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radical_modulus_and_reflection(upper in upper_points(), re in -2.0f64..5.0, im in 0.05f64..3.0) {
        let bps = BranchpointSet::from_upper(&upper).unwrap();
        // stay clear of the straight cuts between partners
        prop_assume!(upper.iter().all(|a| (re - a.re).abs() > 0.05));
        let z = C::new(re, im);
        let r = radical_r(&bps, z).unwrap();
        let modulus: f64 = bps.all().iter().map(|a| (z - a).norm()).product::<f64>().sqrt();
        prop_assert!((r.norm() - modulus).abs() <= 1e-12 * modulus);
        let rc = radical_r(&bps, z.conj()).unwrap();
        prop_assert!((rc - r.conj()).norm() <= 1e-12 * modulus);
    }

    #[test]
    fn parsed_polynomial_matches_horner(coeffs in prop::collection::vec(-3.0f64..3.0, 1..7), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let sd = ScatteringData::parse(&poly_text(&coeffs)).unwrap();
        let z = C::new(re, im);
        let want = horner(&coeffs, z);
        let got = sd.eval_f0(z).unwrap();
        prop_assert!((got - want).norm() <= 1e-12 * (1.0 + want.norm()));
        prop_assert!(sd.schwarz_symmetric);
    }

    #[test]
    fn derivative_matches_central_difference(coeffs in prop::collection::vec(-3.0f64..3.0, 1..6), re in -1.5f64..1.5, im in -1.5f64..1.5, x in -1.0f64..1.0, t in -1.0f64..1.0) {
        let text = format!("{} + exp(0.3*z) * sin(z)", poly_text(&coeffs));
        let sd = ScatteringData::parse(&text).unwrap();
        let z = C::new(re, im);
        let h = 1e-5;
        let fd = (sd.eval_f(z + h, x, t).unwrap() - sd.eval_f(z - h, x, t).unwrap()) / (2.0 * h);
        let d = sd.eval_f_prime(z, x, t).unwrap();
        prop_assert!((fd - d).norm() <= 1e-6 * (1.0 + d.norm()), "{fd} {d}");
    }

    #[test]
    fn parser_never_panics(text in "[z0-9ie+*/^() .-]{0,24}") {
        let _ = ScatteringData::parse(&text);
    }
}
