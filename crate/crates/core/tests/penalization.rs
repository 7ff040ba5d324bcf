use levykit::montecarlo::{sample_tau_batch, McEstimate};
use levykit::penalization::*;
use levykit::spectral::SpectralModel;
use levykit::{bessel, bessel_spec, brownian};
use proptest::prelude::*;

#[test]
fn martingale_means() {
    let ind = WeightFunction::indicator(1.0).unwrap();
    let m = martingale_mean_mc(&brownian(), &ind, 1.0, 100_000, 1).unwrap();
    assert!((m.mean - 1.0).abs() < 3.0 * m.std_error, "{m:?}");
    let spec = bessel_spec(1.5).unwrap();
    let tri = WeightFunction::triangular(2.0).unwrap();
    let a = martingale_mean_mc(&spec, &tri, 2.0, 100_000, 2).unwrap();
    assert!((a.mean - 1.0).abs() < 3.0 * a.std_error, "{a:?}");
    let b = martingale_mean_mc(&spec, &tri, 8.0, 100_000, 3).unwrap();
    assert!(a.z_score(&b) < 3.0);
}

#[test]
fn penalized_one_is_the_martingale_mean() {
    let h = WeightFunction::triangular(1.5).unwrap();
    let a = penalized_expectation(&brownian(), &h, 0.7, |_| 1.0, 5000, 9).unwrap();
    let b = martingale_mean_mc(&brownian(), &h, 0.7, 5000, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn local_time_exceedance_under_penalization() {
    let h = WeightFunction::indicator(1.0).unwrap();
    let (ell, u) = (0.5, 1.0);
    let e = penalized_expectation(&brownian(), &h, u, |s| (s.local_time >= ell) as u8 as f64, 100_000, 4).unwrap();
    let taus = sample_tau_batch(&brownian(), ell, 100_000, 5).unwrap();
    let ind: Vec<f64> = taus.iter().map(|&t| (1.0 - h.cumulative(ell)) * (t <= u) as u8 as f64).collect();
    let reference = McEstimate::from_values(&ind, 5);
    assert!(e.z_score(&reference) < 3.0, "{e:?} {reference:?}");

    let late = penalized_expectation(&brownian(), &h, 4096.0, |s| (s.local_time >= ell) as u8 as f64, 100_000, 6).unwrap();
    // P_0(tau_ell > u) is below 0.01 at this horizon
    assert!((late.mean - 0.5).abs() < 3.0 * late.std_error + 0.01, "{late:?}");
}

#[test]
fn martingale_property() {
    let h = WeightFunction::indicator(1.0).unwrap();
    let r = martingale_property_mc(&brownian(), &h, 0.5, 1.0, 100_000, 7).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.stopped_form_max_diff.unwrap() < 1e-12);
    let same = martingale_property_mc(&brownian(), &h, 0.5, 0.5, 1000, 7).unwrap();
    assert!(same.rows.iter().all(|row| row.at_s == row.at_t));
    let tri = WeightFunction::triangular(2.0).unwrap();
    let r = martingale_property_mc(&bessel_spec(1.5).unwrap(), &tri, 1.0, 3.0, 50_000, 8).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn linfty_law() {
    let h = WeightFunction::indicator(1.0).unwrap();
    let r = linfty_law_check(&brownian(), &h, None, 50_000, 10).unwrap();
    assert!(r.residual.mean < 0.01);
    assert!(r.pass, "gap {}", r.max_gap);
    let tri = WeightFunction::triangular(2.0).unwrap();
    let r = linfty_law_check(&bessel_spec(1.5).unwrap(), &tri, None, 50_000, 11).unwrap();
    assert!(r.max_gap < 0.03, "gap {}", r.max_gap);
}

#[test]
fn uparrow_forms() {
    let b = brownian();
    for y in [0.3, 1.0, 2.5] {
        let v = uparrow_density(&b, 0.0, y, 1.3).unwrap();
        assert!((v - bessel::hitting_density(0.5, y, 1.3) / y).abs() < 1e-15);
    }
    let spec = bessel_spec(1.5).unwrap();
    let m = SpectralModel::preset(&spec).unwrap();
    for (x, y) in [(0.0, 0.7), (0.4, 1.1), (1.5, 0.2)] {
        let a = uparrow_density(&spec, x, y, 0.8).unwrap();
        let s = uparrow_density_spectral(&m, x, y, 0.8).unwrap();
        assert!((a - s.value).abs() < 1e-8, "{x} {y}: {a} {}", s.value);
    }
    // small x approaches the x = 0 limit
    let near = uparrow_density(&spec, 1e-6, 0.7, 0.8).unwrap();
    let at = uparrow_density(&spec, 0.0, 0.7, 0.8).unwrap();
    assert!((near / at - 1.0).abs() < 1e-6);
}

#[test]
fn uparrow_normalization_presets() {
    for spec in [brownian(), bessel_spec(1.5).unwrap()] {
        let m = SpectralModel::preset(&spec).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let e = uparrow_normalization(&m, t).unwrap();
            assert!((e.value - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn post_last_zero_law() {
    let h = WeightFunction::indicator(1.0).unwrap();
    let r = post_lastzero_marginal_check(&brownian(), &h, None, 1.0, 50_000, 12).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.correlation.abs() < 3.0 * r.correlation_se, "{r:?}");
    assert!((r.expected.iter().sum::<f64>() - 1.0).abs() < 1e-8);
}

#[test]
fn penalization_numerator() {
    let spec = bessel_spec(1.5).unwrap();
    let h = WeightFunction::indicator(1.0).unwrap();
    let r = numerator_ratio_mc(&spec, &h, 1.0, 1e4, 100_000, 13).unwrap();
    let target = spec.scale(1.0) * h.h(0.0) + 1.0;
    assert!((r.mean / target - 1.0).abs() < 0.2, "{r:?}");
}

proptest! {
    #[test]
    fn weights_are_nonnegative(x in 0.0f64..50.0, ell in 0.0f64..5.0, a in 0.1f64..2.0, b in 0.0f64..2.0) {
        // two-piece table normalized to 1
        let hs = vec![a + b, a, 0.0];
        let mass = 0.5 * (2.0 * a + b) + 0.5 * a;
        let xs = vec![0.0, 1.0 / mass, 2.0 / mass];
        let h = WeightFunction::table(xs, hs).unwrap();
        let spec = bessel_spec(0.8).unwrap();
        prop_assert!(martingale_value(&spec, &h, x, ell).unwrap() >= 0.0);
        prop_assert!((martingale_value(&spec, &h, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(h.check_monotone_compact().is_ok());
    }

    #[test]
    fn indicator_identity(x in 0.0f64..10.0, ell in 0.0f64..4.0, ell0 in 0.1f64..3.0) {
        let spec = brownian();
        let h = WeightFunction::indicator(ell0).unwrap();
        let v = martingale_value(&spec, &h, x, ell).unwrap();
        let expected = if ell < ell0 { 1.0 + (x - ell) / ell0 } else { 0.0 };
        prop_assert!((v - expected).abs() < 1e-12);
        // optional stopping at tau_ell: value at (0, ell) is int_ell^inf h
        let stopped = martingale_value(&spec, &h, 0.0, ell).unwrap();
        prop_assert!((stopped - (1.0 - h.cumulative(ell))).abs() < 1e-12);
    }
}
