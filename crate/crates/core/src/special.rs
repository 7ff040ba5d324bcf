//! Bessel functions of real order in the normalizations the rest of the crate needs.
//!
//! `J` is delegated to `puruspe` in the oscillatory middle range; the small-argument series
//! and the large-argument Hankel expansion are done here so that negative orders and the
//! `z -> 0` limits come out without division.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// `gamma` for arguments that may be non-positive non-integers (needed for `1/Gamma(k+nu+1)`).
fn recip_gamma(x: f64) -> f64 {
    if x > 0.0 {
        (-ln_gamma(x)).exp()
    } else if x == x.floor() {
        0.0
    } else {
        // Reflection: 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi.
        (ln_gamma(1.0 - x)).exp() * (PI * x).sin() / PI
    }
}

/// Hankel expansion coefficients `a_k(nu)` evaluated as a running product.
fn hankel_terms(nu: f64, z: f64, max_terms: usize) -> Vec<f64> {
    let mu = 4.0 * nu * nu;
    let mut terms = Vec::with_capacity(max_terms);
    let mut t = 1.0;
    terms.push(t);
    for k in 1..max_terms {
        let odd = (2 * k - 1) as f64;
        let next = t * (mu - odd * odd) / (k as f64 * 8.0 * z);
        if next.abs() > t.abs() || next.abs() < 1e-17 * terms[0] {
            if next.abs() <= t.abs() {
                terms.push(next);
            }
            break;
        }
        terms.push(next);
        t = next;
    }
    terms
}

/// `exp(-z) I_nu(z)` for `z >= 0` and real `nu > -1`.
pub fn bessel_i_scaled(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 {
            1.0
        } else if nu > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if z <= 30.0 {
        let half = 0.5 * z;
        let q = half * half;
        let log0 = nu * half.ln() - ln_gamma(nu + 1.0) - z;
        let mut term = log0.exp();
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + nu));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum
    } else {
        // Alternating signs for I: sum (-1)^k a_k(nu) / z^k.
        let terms = hankel_terms(nu, z, 80);
        let s: f64 = terms
            .iter()
            .enumerate()
            .map(|(k, t)| if k % 2 == 0 { *t } else { -*t })
            .sum();
        s / (2.0 * PI * z).sqrt()
    }
}

/// `(z/2)^(-nu) I_nu(z)` for `0 <= z <= 30` and `nu > -1`, by its power series.
///
/// Equals `1 / Gamma(nu + 1)` at `z = 0`.
pub fn bessel_i_reduced(nu: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = recip_gamma(nu + 1.0);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-17 * sum || k > 500.0 {
            break;
        }
    }
    sum
}

/// `(z/2)^(-nu) J_nu(z)`, an entire function of `z`, for `nu > -1`.
///
/// At `z = 0` it equals `1 / Gamma(nu + 1)`.
pub fn bessel_j_reduced(nu: f64, z: f64) -> f64 {
    let z = z.abs();
    if z <= 2.0 {
        let q = 0.25 * z * z;
        let mut term = recip_gamma(nu + 1.0);
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -q / (k * (k + nu));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) || k > 200.0 {
                break;
            }
        }
        return sum;
    }
    let j = if z > 60.0 {
        bessel_j_hankel(nu, z)
    } else if nu >= 0.0 {
        puruspe::bessel::Jnu_Ynu(nu, z).0
    } else {
        let a = -nu;
        let (j, y) = puruspe::bessel::Jnu_Ynu(a, z);
        (a * PI).cos() * j - (a * PI).sin() * y
    };
    j * (0.5 * z).powf(-nu)
}

/// `J_nu(z)` for `z > 0`.
pub fn bessel_j(nu: f64, z: f64) -> f64 {
    bessel_j_reduced(nu, z) * (0.5 * z).powf(nu)
}

fn bessel_j_hankel(nu: f64, z: f64) -> f64 {
    let terms = hankel_terms(nu, z, 80);
    let mut p = 0.0;
    let mut q = 0.0;
    for (k, t) in terms.iter().enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
    }
    let omega = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * omega.cos() - q * omega.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn half_order_i_matches_elementary() {
        // I_{1/2}(z) = sqrt(2/(pi z)) sinh z, I_{-1/2}(z) = sqrt(2/(pi z)) cosh z.
        for z in [0.01f64, 0.7, 3.0, 12.0, 29.9, 30.1, 55.0, 400.0] {
            let f = (2.0 / (PI * z)).sqrt();
            let sinh = 0.5 * (1.0 - (-2.0 * z).exp());
            let cosh = 0.5 * (1.0 + (-2.0 * z).exp());
            assert!(close(bessel_i_scaled(0.5, z), f * sinh, 1e-13), "z={z}");
            assert!(close(bessel_i_scaled(-0.5, z), f * cosh, 1e-13), "z={z}");
        }
    }

    #[test]
    fn half_order_j_matches_elementary() {
        for z in [0.0f64, 0.3, 1.9, 2.1, 7.5, 33.0, 59.0, 61.0, 250.0] {
            // (z/2)^{-1/2} J_{1/2}(z) = 2 sin z / (sqrt(pi) z), and cos for -1/2.
            let s = if z == 0.0 {
                2.0 / PI.sqrt()
            } else {
                2.0 * z.sin() / (PI.sqrt() * z)
            };
            let c = z.cos() / PI.sqrt();
            assert!((bessel_j_reduced(0.5, z) - s).abs() < 1e-13, "z={z}");
            assert!((bessel_j_reduced(-0.5, z) - c).abs() < 1e-13, "z={z}");
        }
    }

    #[test]
    fn quarter_order_reference_values() {
        // Reference values from an arbitrary-precision evaluation.
        assert!(close(bessel_j(0.25, 5.0), -0.280_972_065_761_376_0, 1e-11));
        assert!(close(bessel_j(-0.25, 5.0), -0.043_874_518_227_060_09, 1e-10));
        assert!(close(bessel_i_scaled(0.25, 2.0), 0.298_191_598_787_902_15, 1e-11));
        assert!(close(bessel_i_scaled(-0.25, 40.0), 0.063_228_228_295_862_60, 1e-11));
    }

    #[test]
    fn reduced_i_agrees_with_scaled() {
        for nu in [-0.75, -0.25, 0.25, 0.5] {
            for z in [0.1, 1.0, 7.0, 25.0] {
                let a = bessel_i_reduced(nu, z) * (0.5 * z).powf(nu) * (-z).exp();
                assert!(close(a, bessel_i_scaled(nu, z), 1e-13), "nu={nu} z={z}");
            }
        }
    }

    #[test]
    fn branches_match_reference_values() {
        // (nu, [Jr(2), Jr(2.5), Is(30), Is(30.5), Jr(60), Jr(60.5)]) with Jr = (z/2)^-nu J_nu,
        // Is = e^-z I_nu, from an arbitrary-precision evaluation.
        let table: [(f64, [f64; 6]); 4] = [
            (-0.75, [-0.446_720_657_955_739_45, -0.592_149_290_173_287_23, 0.072_451_692_877_660_115, 0.071_861_720_993_150_855, -1.005_617_031_590_771_3, -0.473_262_827_170_092_71]),
            (-0.25, [0.003_586_915_624_172_916_1, -0.254_792_494_188_505_47, 0.073_068_475_919_252_269, 0.072_463_237_229_416_631, -0.240_207_167_551_316_01, -0.220_100_192_346_695_45]),
            (0.25, [0.397_811_064_338_178_35, 0.132_943_014_949_436_89, 0.073_068_475_919_252_269, 0.072_463_237_229_416_631, -0.028_383_280_503_112_896, -0.040_781_157_709_580_226]),
            (0.75, [0.569_821_829_174_256_85, 0.357_224_379_746_978_02, 0.072_451_692_877_660_115, 0.071_861_720_993_150_855, 0.000_645_033_095_714_287_96, -0.003_240_154_389_976_923_1]),
        ];
        for (nu, r) in table {
            assert!((bessel_j_reduced(nu, 2.0) - r[0]).abs() < 1e-13, "nu={nu}");
            assert!((bessel_j_reduced(nu, 2.5) - r[1]).abs() < 1e-12, "nu={nu}");
            assert!(close(bessel_i_scaled(nu, 30.0), r[2], 1e-11), "nu={nu}");
            assert!(close(bessel_i_scaled(nu, 30.5), r[3], 1e-11), "nu={nu}");
            assert!((bessel_j_reduced(nu, 60.0) - r[4]).abs() < 1e-11, "nu={nu}");
            assert!((bessel_j_reduced(nu, 60.5) - r[5]).abs() < 1e-11, "nu={nu}");
        }
    }
}
