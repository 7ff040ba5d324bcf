use levykit::spectral::SpectralModel;
use levykit::subexp::*;
use levykit::{bessel, bessel_spec, Error};
use proptest::prelude::*;

#[test]
fn pareto_one_doubles() {
    let p = TailDistribution::pareto(1.0).unwrap();
    let c = conv_tail(&p, &p, 1e3).unwrap();
    assert!((c / (2.0 * p.tail(1e3).unwrap()) - 1.0).abs() < 0.02);
}

#[test]
fn pareto_ratios_by_index() {
    // x*(alpha): first decade where |2 - ratio| < 0.1
    for (alpha, x_star) in [(0.25, 1e4), (0.5, 1e2), (0.75, 1e2)] {
        let p = TailDistribution::pareto(alpha).unwrap();
        for x in [x_star, 10.0 * x_star, 100.0 * x_star] {
            let r = subexp_ratio(&p, x).unwrap();
            assert!((2.0 - r).abs() < 0.1, "alpha {alpha} x {x} ratio {r}");
            assert!(r >= 1.0);
        }
    }
}

#[test]
fn exponential_is_not_subexponential() {
    let e = TailDistribution::exponential(1.0).unwrap();
    assert!(subexp_ratio(&e, 20.0).unwrap() > 10.0);
    let r = long_tail_check(&e, &[1.0], 30.0).unwrap();
    assert!((r[0] - (-1.0f64).exp()).abs() < 1e-3);
    assert!(exp_moment_check(&e, 0.5, 20.0).unwrap() < exp_moment_check(&e, 0.5, 10.0).unwrap());
}

#[test]
fn long_tail_and_moments_for_pareto() {
    let p = TailDistribution::pareto(0.5).unwrap();
    let r = long_tail_check(&p, &[0.0, 1.0, 5.0], 1e4).unwrap();
    assert_eq!(r[0], 1.0);
    assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-3));
    assert!(exp_moment_check(&p, 0.01, 1e4).unwrap() > exp_moment_check(&p, 0.01, 1e3).unwrap());
    assert_eq!(exp_moment_check(&p, 0.01, 0.0).unwrap(), 1.0);
}

#[test]
fn grid_refinement_is_stable() {
    for d in [TailDistribution::pareto(1.5).unwrap(), TailDistribution::exponential(0.3).unwrap()] {
        let coarse = d.regrid(log_grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_POINTS / 2)).unwrap();
        for x in [0.5, 3.0, 20.0] {
            let a = conv_tail(&coarse, &coarse, x).unwrap();
            let b = conv_tail(&d, &d, x).unwrap();
            assert!((a / b - 1.0).abs() < 1e-4, "{} {x}: {a} {b}", d.label());
        }
    }
}

#[test]
fn limit_diagnostic_is_flat_for_pareto() {
    let p = TailDistribution::pareto(0.5).unwrap();
    let d = limit_diagnostic(&p, |x| subexp_ratio(&p, x)).unwrap();
    assert_eq!(d.xs.len(), 3);
    assert!(d.slope.abs() < 0.01, "{d:?}");
}

#[test]
fn mixed_with_hitting_tail() {
    // G = hitting-time tail of Brownian motion from 1, equivalent to sqrt(2/pi) x^-1/2
    let p = TailDistribution::pareto(0.5).unwrap();
    let grid = log_grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_POINTS);
    let g = TailDistribution::from_fn("hit", |t| bessel::hitting_tail(0.5, 1.0, t), grid).unwrap();
    let m = mixed_ratio(&p, &g, 1e5).unwrap();
    assert!((m - 1.0).abs() < 0.01, "{m}");
}

#[test]
fn division_guard() {
    let e = TailDistribution::exponential(1.0).unwrap();
    assert!(matches!(subexp_ratio(&e, 800.0), Err(Error::DivisionGuard(_))));
}

#[test]
fn tauberian_hitting_mechanism() {
    let alpha = 0.25;
    let x = 1.0;
    let r = tauberian_ratio(
        |g| bessel::killed_spectral_density(alpha, g) / g,
        |g| bessel::eigen_c(alpha, x, g),
        |_| bessel::scale(alpha, x),
        1e3,
    )
    .unwrap();
    assert!((r - 1.0).abs() < 0.03, "{r}");
    // the same ratio computed in the time domain
    let spec = bessel_spec(1.5).unwrap();
    let m = SpectralModel::preset(&spec).unwrap();
    let direct = m.hitting_tail(x, 1e3).unwrap().value / (spec.scale(x) * m.levy_tail(1e3).unwrap().value);
    assert!((r - direct).abs() < 1e-6, "{r} {direct}");
}

fn tail_strategy() -> impl Strategy<Value = TailDistribution> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|a| TailDistribution::pareto(a).unwrap()),
        (0.1f64..3.0).prop_map(|r| TailDistribution::exponential(r).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conv_tail_bounds(f in tail_strategy(), g in tail_strategy(), x in 0.01f64..500.0) {
        let c = conv_tail(&f, &g, x).unwrap();
        let lower = f.tail(x).unwrap().max(g.tail(x).unwrap());
        prop_assert!(c <= 1.0);
        prop_assert!(c >= lower * (1.0 - 1e-9));
    }

    #[test]
    fn tails_are_monotone(f in tail_strategy(), a in 0.0f64..1e5, b in 0.0f64..1e5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(f.tail(hi).unwrap() <= f.tail(lo).unwrap());
    }

    #[test]
    fn tauberian_identity(lambda in 0.5f64..500.0, p in -0.8f64..2.0) {
        let r = tauberian_ratio(move |g: f64| g.powf(p), |g| (1.0 + g).ln() + 1.0, |g| (1.0 + g).ln() + 1.0, lambda).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }
}
