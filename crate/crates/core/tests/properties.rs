use nlgcs::harness::{fit_slope, ExperimentConfig, Metric};
use nlgcs::theory::{entropy_bound, EntropySet};
use nlgcs::{cosine_similarity, link_eval, lipschitz_approx_eval, relative_l2, LinkSpec};
use proptest::prelude::*;

fn nonzero_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn links() -> impl Strategy<Value = LinkSpec> {
    prop_oneof![
        Just(LinkSpec::Sign),
        (0.1f64..5.0).prop_map(|l| LinkSpec::DitheredSign { lambda: l }),
        (0.1f64..5.0).prop_map(|d| LinkSpec::DitheredUniformQuantizer { delta: d }),
    ]
}

proptest! {
    #[test]
    fn metrics_are_in_range(a in nonzero_vec(6), b in nonzero_vec(6)) {
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!(relative_l2(&a, &b).unwrap() >= 0.0);
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_decreasing_and_linear(
        k in 1usize..50, l in 0.5f64..20.0, r in 0.1f64..5.0, t in 0.1f64..2.0,
        eps in 0.01f64..0.99, f1 in 0.01f64..1.0, f2 in 0.01f64..1.0,
    ) {
        let lr = l * r;
        let (lo, hi) = if f1 < f2 { (f1 * lr, f2 * lr) } else { (f2 * lr, f1 * lr) };
        prop_assume!(hi > lo * (1.0 + 1e-9));
        for set in [EntropySet::K, EntropySet::Kminus, EntropySet::KminusEps, EntropySet::Normalized] {
            let a = entropy_bound(set, k, l, r, t, eps, lo).unwrap();
            let b = entropy_bound(set, k, l, r, t, eps, hi).unwrap();
            prop_assert!(a > b);
            let double = entropy_bound(set, 2 * k, l, r, t, eps, lo).unwrap();
            prop_assert!((double - 2.0 * a).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn fit_recovers_power_laws(c in 0.01f64..100.0, p in -2.0f64..1.0) {
        let pairs: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0, 800.0].iter().map(|&m: &f64| (m, c * m.powf(p))).collect();
        let fit = fit_slope(&pairs).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn link_is_deterministic(spec in links(), u in -10.0f64..10.0, t in -0.5f64..0.5) {
        let tau = spec.dither_range().map(|(lo, hi)| lo + (t + 0.5) * (hi - lo));
        let a = link_eval(&spec, u, tau, None).unwrap();
        prop_assert_eq!(a, link_eval(&spec, u, tau, None).unwrap());
    }

    #[test]
    fn approximation_is_exact_away_from_jumps(spec in links(), u in -10.0f64..10.0, frac in 0.01f64..0.99) {
        let tau = spec.dither_range().map(|(lo, _)| lo * 0.3).unwrap_or(0.0);
        let b0 = spec.params().beta0;
        let beta = if b0.is_finite() { frac * b0 / 2.0 } else { frac };
        let f = spec.realize(tau, 0.0);
        let far = f.nearest_jump(u).is_none_or(|j| (u - j.x0).abs() > beta / 2.0);
        prop_assume!(far);
        let fb = lipschitz_approx_eval(&spec, beta, u, tau).unwrap();
        prop_assert_eq!(fb, f.eval(u));
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(), delta in 0.1f64..10.0, steps in 1usize..5000,
        grid in proptest::collection::btree_set(1usize..5000, 1..6), sigma in 0.0f64..2.0,
        cosine in any::<bool>(),
    ) {
        let cfg = ExperimentConfig {
            master_seed: seed,
            link: LinkSpec::DitheredUniformQuantizer { delta },
            m_grid: grid.into_iter().collect(),
            noise_sigma: sigma,
            metric: if cosine { Metric::Cosine } else { Metric::RelL2 },
            solver: nlgcs::SolverOptions { steps, ..Default::default() },
            ..ExperimentConfig::default()
        };
        prop_assert_eq!(ExperimentConfig::parse(&cfg.to_text(), None).unwrap(), cfg);
    }
}

#[test]
fn parallel_map_matches_sequential() {
    let f = |i: usize| nlgcs::rng::StreamRng::derive(7, 3, &[i as u64]).gaussian();
    let par = nlgcs::par::map_range(1000, f);
    let seq: Vec<f64> = (0..1000).map(f).collect();
    assert_eq!(par, seq);
}
