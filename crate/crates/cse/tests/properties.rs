//! Randomized invariants of the closed-form demand system, the spread
//! construction, and supporting primitives.

use proptest::prelude::*;

use cse::demand::{demand, expenditure_shares};
use cse::economy::{EndowmentProcess, PriceSystem, UtilitySpec, WealthGrid};
use cse::spreads::{marginal_cx_dominates, mean_preserving_spread, SpreadScheme};

fn utility_strategy(n: usize) -> impl Strategy<Value = UtilitySpec> {
    (
        proptest::collection::vec(0.1f64..1.0, n),
        prop_oneof![Just(None), (0.1f64..0.9).prop_map(Some)],
    )
        .prop_map(|(mut alphas, gamma)| {
            let total: f64 = alphas.iter().sum();
            for a in &mut alphas {
                *a /= total;
            }
            match gamma {
                Some(g) => UtilitySpec::ces(g, alphas),
                None => UtilitySpec::cobb_douglas(alphas),
            }
        })
}

fn demand_case() -> impl Strategy<Value = (UtilitySpec, Vec<f64>, f64)> {
    (2usize..=4).prop_flat_map(|n| {
        (
            utility_strategy(n),
            proptest::collection::vec(0.05f64..20.0, n),
            0.01f64..50.0,
        )
    })
}

proptest! {
    #[test]
    fn demand_exhausts_the_budget((u, p, c) in demand_case()) {
        let x = demand(&u, c, &p).unwrap();
        let spent: f64 = p.iter().zip(&x).map(|(pi, xi)| pi * xi).sum();
        prop_assert!((spent - c).abs() <= 1e-10 * c, "spent {spent}, budget {c}");
        prop_assert!(x.iter().all(|&xi| xi > 0.0));
    }

    #[test]
    fn expenditure_shares_satisfy_the_budget_identity((u, p, _c) in demand_case()) {
        let z = expenditure_shares(&u, &p).unwrap();
        let total: f64 = z.iter().zip(&p).map(|(zi, pi)| zi * pi).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "Σ p_i z_i = {total}");
        prop_assert!(z.iter().all(|&zi| zi > 0.0));
    }

    #[test]
    fn demand_is_homogeneous_of_degree_zero((u, p, c) in demand_case(), theta in 0.1f64..10.0) {
        let x = demand(&u, c, &p).unwrap();
        let p_scaled: Vec<f64> = p.iter().map(|pi| theta * pi).collect();
        let x_scaled = demand(&u, theta * c, &p_scaled).unwrap();
        for (a, b) in x.iter().zip(&x_scaled) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn demand_beats_random_feasible_bundles(
        (u, p, c) in demand_case(),
        weights in proptest::collection::vec(0.05f64..1.0, 4),
    ) {
        let x = demand(&u, c, &p).unwrap();
        let w = &weights[..p.len()];
        let total: f64 = w.iter().sum();
        let alt: Vec<f64> = p
            .iter()
            .zip(w)
            .map(|(pi, wi)| c * (wi / total) / pi)
            .collect();
        let best = u.utility(&x);
        let other = u.utility(&alt);
        prop_assert!(
            best >= other - 1e-9 * (1.0 + best.abs()),
            "U(x*) = {best} < U(alt) = {other}"
        );
    }

    #[test]
    fn split_point_spread_preserves_means_and_spreads_marginals(
        support in proptest::collection::vec(
            proptest::collection::vec(0.2f64..5.0, 2),
            1..=4,
        ),
        s in 0.01f64..0.4,
    ) {
        let k = support.len();
        let base = EndowmentProcess::new(support, vec![1.0 / k as f64; k]);
        let spread = mean_preserving_spread(&base, s, SpreadScheme::SplitPoint).unwrap();
        for i in 0..2 {
            let m0 = base.mean_good(i);
            let m1 = spread.mean_good(i);
            prop_assert!((m0 - m1).abs() <= 1e-12 * m0, "mean moved: {m0} -> {m1}");
            prop_assert!(marginal_cx_dominates(
                &spread.marginal(i),
                &base.marginal(i),
                1e-9,
            ));
        }
    }

    #[test]
    fn wealth_grid_is_strictly_increasing_and_interpolates(
        lo in -50.0f64..0.0,
        width in 1.0f64..200.0,
        n in 5usize..80,
        curvature in 1.0f64..3.0,
    ) {
        let grid = WealthGrid::with_spacing(lo, lo + width, n, curvature).unwrap();
        let nodes = grid.nodes();
        prop_assert_eq!(nodes.len(), n);
        prop_assert!((nodes[0] - lo).abs() < 1e-9);
        prop_assert!((nodes[n - 1] - (lo + width)).abs() < 1e-9);
        prop_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        // linear interpolation reproduces affine functions exactly
        let values: Vec<f64> = nodes.iter().map(|a| 2.0 * a + 1.0).collect();
        for w in nodes.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            prop_assert!((grid.interp(&values, mid) - (2.0 * mid + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn numeraire_form_is_scale_invariant(
        p in proptest::collection::vec(0.05f64..20.0, 2..=4),
        r in 0.001f64..0.9,
        theta in 0.1f64..10.0,
    ) {
        let prices = PriceSystem::new(p, r).unwrap();
        let a = prices.numeraire();
        let b = prices.scaled(theta).numeraire();
        prop_assert!((a.p[0] - 1.0).abs() < 1e-15);
        prop_assert_eq!(a.r, b.r);
        for (x, y) in a.p.iter().zip(&b.p) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
