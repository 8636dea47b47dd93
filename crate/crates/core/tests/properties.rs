//! Randomized properties of the potential, measures, transport and energy.

use approx::assert_relative_eq;
use powerlaw::{
    d_inf, d_lambda, interaction_energy, lp_oracle, monotone_coupling, position_gradient, DiscreteMeasure, Potential,
};
use proptest::prelude::*;

fn exponents() -> impl Strategy<Value = (f64, f64)> {
    (2.0f64..4.0, 0.05f64..10.0).prop_map(|(q, gap)| (q + gap, q))
}

/// Up to `max` atoms with distinct positions in `[-2, 2]` and positive mass.
fn measure(max: usize) -> impl Strategy<Value = DiscreteMeasure<f64>> {
    prop::collection::vec((-2.0f64..2.0, 0.05f64..1.0), 1..=max)
        .prop_map(|pairs| DiscreteMeasure::from_atoms(pairs).unwrap())
}

/// Like [`measure`], with atoms at least `1e-3` apart.
fn spread_measure(max: usize) -> impl Strategy<Value = DiscreteMeasure<f64>> {
    prop::collection::vec((0usize..4000, 0.05f64..1.0), 2..=max).prop_filter_map("distinct slots", |raw| {
        let mut slots: Vec<usize> = raw.iter().map(|r| r.0).collect();
        slots.sort_unstable();
        slots.dedup();
        (slots.len() == raw.len())
            .then(|| DiscreteMeasure::from_atoms(raw.iter().map(|&(k, m)| (k as f64 * 1e-3 - 2.0, m))).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn potential_is_even((p, q) in exponents(), x in -3.0f64..3.0) {
        let pot = Potential::new(p, q).unwrap();
        prop_assert_eq!(pot.value(x), pot.value(-x));
        prop_assert_eq!(pot.slope(x), -pot.slope(-x));
        prop_assert!(pot.value(x) >= pot.min_value() - 1e-15);
    }

    #[test]
    fn derivatives_match_differences((p, q) in exponents(), x in 0.05f64..2.5) {
        let pot = Potential::new(p, q).unwrap();
        let h = 1e-6 * x.max(1.0);
        for order in 1..=3u32 {
            let lo = pot.eval(x - h, order - 1).unwrap();
            let hi = pot.eval(x + h, order - 1).unwrap();
            let fd = (hi - lo) / (2.0 * h);
            let exact = pot.eval(x, order).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "order {}: {} vs {}", order, fd, exact);
        }
    }

    #[test]
    fn canonicalize_is_idempotent(mu in measure(6)) {
        let once = mu.canonicalize();
        prop_assert_eq!(once.canonicalize(), once.clone());
        // mirror images agree up to the rounding of the translation
        let mirrored = mu.reflect().canonicalize();
        prop_assert_eq!(mirrored.len(), once.len());
        prop_assert!(d_inf(&mirrored, &once) <= 1e-12);
        prop_assert_eq!(once.positions()[0], 0.0);
    }

    #[test]
    fn merging_conserves_mass_and_mean(mu in measure(8), tol in 0.0f64..0.5) {
        let merged = mu.merge_atoms(tol);
        prop_assert!(merged.len() <= mu.len());
        prop_assert!((merged.total_mass() - mu.total_mass()).abs() < 1e-14);
        prop_assert!((merged.mean() - mu.mean()).abs() < 1e-12);
        for w in merged.positions().windows(2) {
            prop_assert!(w[1] - w[0] > tol);
        }
    }

    #[test]
    fn energy_is_translation_and_reflection_invariant((p, q) in exponents(), mu in measure(6), t in -5.0f64..5.0) {
        let pot = Potential::new(p, q).unwrap();
        let e = interaction_energy(&pot, &mu);
        prop_assert!((interaction_energy(&pot, &mu.translate(t)) - e).abs() <= 1e-10 * (1.0 + e.abs()));
        prop_assert!((interaction_energy(&pot, &mu.reflect()) - e).abs() <= 1e-12 * (1.0 + e.abs()));
    }

    #[test]
    fn monotone_coupling_has_the_right_marginals(mu in measure(5), nu in measure(5)) {
        let c = monotone_coupling(&mu, &nu);
        for (a, b) in c.source_marginal(&mu).iter().zip(mu.masses()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for (a, b) in c.target_marginal(&nu).iter().zip(nu.masses()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn transport_matches_the_lp(mu in measure(5), nu in measure(5), lambda in prop::sample::select(vec![1.0, 2.0, 3.0])) {
        let monotone = d_lambda(&mu, &nu, lambda).unwrap().powf(lambda);
        let lp = lp_oracle(&mu, &nu, lambda).unwrap();
        prop_assert!((monotone - lp).abs() <= 1e-9, "{} vs {}", monotone, lp);
    }

    #[test]
    fn transport_is_a_metric(a in measure(5), b in measure(5), c in measure(5), lambda in 1.0f64..4.0) {
        let d = |x: &DiscreteMeasure<f64>, y: &DiscreteMeasure<f64>| d_lambda(x, y, lambda).unwrap();
        prop_assert!(d(&a, &a).abs() <= 1e-9);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        prop_assert!(d_inf(&a, &c) <= d_inf(&a, &b) + d_inf(&b, &c) + 1e-9);
        prop_assert!(d(&a, &b) <= d_inf(&a, &b) + 1e-9);
    }

    #[test]
    fn gradient_matches_differences((p, q) in exponents(), mu in spread_measure(5)) {
        let pot = Potential::new(p, q).unwrap();
        let grad = position_gradient(&pot, &mu);
        let atoms: Vec<(f64, f64)> = mu.atoms().iter().map(|a| (a.position, a.mass)).collect();
        let h = 1e-6;
        let shifted = |i: usize, dx: f64| {
            let mut moved = atoms.clone();
            moved[i].0 += dx;
            interaction_energy(&pot, &DiscreteMeasure::from_atoms(moved).unwrap())
        };
        for (i, &g) in grad.iter().enumerate() {
            let fd = (shifted(i, h) - shifted(i, -h)) / (2.0 * h);
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "atom {}: {} vs {}", i, fd, g);
        }
    }
}

#[test]
fn closed_form_two_dirac_energy() {
    for p in [2.5, 3.0, 4.0, 6.0, 20.0] {
        for m in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let pot = Potential::new(p, 2.0).unwrap();
            let mu = DiscreteMeasure::two_dirac(m).unwrap();
            assert_relative_eq!(interaction_energy(&pot, &mu), m * (1.0 - m) * (1.0 / p - 0.5), epsilon = 1e-15);
        }
    }
}
