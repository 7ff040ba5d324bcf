//! Closed forms for the Bessel family on `[0, inf)` with index `alpha = (2 - delta)/2`.
//!
//! Normalization: scale `S(x) = x^(2 alpha) / (2 alpha)`, speed `m(dx) = 2 x^(1 - 2 alpha) dx`,
//! local time at 0 measured in units of `S`, so `S(X) - L` is a martingale. Brownian motion
//! reflected at 0 is `alpha = 1/2`. Densities of `X_t` are taken with respect to `m`.

use statrs::function::gamma::{gamma, gamma_lr, gamma_ur, ln_gamma};

use crate::special::{bessel_i_reduced, bessel_i_scaled, bessel_j_reduced};

pub fn scale(alpha: f64, x: f64) -> f64 {
    x.powf(2.0 * alpha) / (2.0 * alpha)
}

pub fn speed_density(alpha: f64, x: f64) -> f64 {
    2.0 * x.powf(1.0 - 2.0 * alpha)
}

/// `M(x) = m([0, x])`.
pub fn cumulative_speed(alpha: f64, x: f64) -> f64 {
    x.powf(2.0 - 2.0 * alpha) / (1.0 - alpha)
}

/// `B(x) = int_0^x M dS`.
pub fn bound_base(alpha: f64, x: f64) -> f64 {
    x * x / (2.0 * (1.0 - alpha))
}

/// `kappa` in the Laplace exponent `kappa * lambda^alpha` of the inverse local time.
pub fn exponent_constant(alpha: f64) -> f64 {
    gamma(1.0 - alpha) * 2f64.powf(1.0 - alpha) / gamma(alpha)
}

pub fn laplace_exponent(alpha: f64, lambda: f64) -> f64 {
    exponent_constant(alpha) * lambda.powf(alpha)
}

/// Lévy density of the inverse local time.
pub fn levy_density(alpha: f64, t: f64) -> f64 {
    2f64.powf(1.0 - alpha) * alpha * t.powf(-1.0 - alpha) / gamma(alpha)
}

/// `nu((t, inf))`.
pub fn levy_tail(alpha: f64, t: f64) -> f64 {
    2f64.powf(1.0 - alpha) * t.powf(-alpha) / gamma(alpha)
}

/// Density (w.r.t. `m`) of the reflected process.
pub fn transition_density(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    density(alpha, -alpha, t, x, y)
}

/// Density (w.r.t. `m`) of the process killed at 0.
pub fn killed_density(alpha: f64, t: f64, x: f64, y: f64) -> f64 {
    density(alpha, alpha, t, x, y)
}

fn density(alpha: f64, nu: f64, t: f64, x: f64, y: f64) -> f64 {
    let z = x * y / t;
    if z <= 30.0 {
        // (xy)^alpha I_nu(z) = (xy)^alpha (z/2)^nu Ir_nu(z)
        let prefactor = if nu < 0.0 {
            (2.0 * t).powf(alpha)
        } else {
            (x * y).powf(2.0 * alpha) * (2.0 * t).powf(-alpha)
        };
        prefactor * (-(x * x + y * y) / (2.0 * t)).exp() * bessel_i_reduced(nu, z) / (2.0 * t)
    } else {
        let d = x - y;
        (x * y).powf(alpha) * (-(d * d) / (2.0 * t)).exp() * bessel_i_scaled(nu, z) / (2.0 * t)
    }
}

/// Density of the first hitting time of 0 started from `x > 0`.
pub fn hitting_density(alpha: f64, x: f64, t: f64) -> f64 {
    let u = x * x / (2.0 * t);
    (alpha * u.ln() - u - ln_gamma(alpha)).exp() / t
}

/// `P_x(H_0 > t)`.
pub fn hitting_tail(alpha: f64, x: f64, t: f64) -> f64 {
    gamma_lr(alpha, x * x / (2.0 * t))
}

/// `P_x(H_0 <= t)`.
pub fn hitting_cdf(alpha: f64, x: f64, t: f64) -> f64 {
    gamma_ur(alpha, x * x / (2.0 * t))
}

/// Density of the principal spectral measure of the reflected process.
pub fn spectral_density(alpha: f64, g: f64) -> f64 {
    g.powf(-alpha) / (2f64.powf(1.0 - alpha) * gamma(1.0 - alpha).powi(2))
}

/// Density of the principal spectral measure of the killed process.
pub fn killed_spectral_density(alpha: f64, g: f64) -> f64 {
    2f64.powf(1.0 - alpha) * g.powf(alpha) / gamma(alpha).powi(2)
}

pub fn coefficient_c(alpha: f64, x: f64, n: usize) -> f64 {
    let n = n as f64;
    (ln_gamma(alpha) + (2.0 * alpha + 2.0 * n) * x.ln()
        - (n + 1.0) * std::f64::consts::LN_2
        - ln_gamma(n + 1.0)
        - ln_gamma(n + 1.0 + alpha))
        .exp()
}

pub fn coefficient_a(alpha: f64, x: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    (ln_gamma(1.0 - alpha) + 2.0 * n * x.ln()
        - n * std::f64::consts::LN_2
        - ln_gamma(n + 1.0)
        - ln_gamma(n + 1.0 - alpha))
        .exp()
}

/// `C(x; gamma)`, vanishing at `x = 0` with `C(x; 0) = S(x)`.
pub fn eigen_c(alpha: f64, x: f64, g: f64) -> f64 {
    let z = x * (2.0 * g).sqrt();
    0.5 * gamma(alpha) * x.powf(2.0 * alpha) * bessel_j_reduced(alpha, z)
}

/// `A(x; gamma)`, with `A(0; gamma) = 1`.
pub fn eigen_a(alpha: f64, x: f64, g: f64) -> f64 {
    let z = x * (2.0 * g).sqrt();
    gamma(1.0 - alpha) * bessel_j_reduced(-alpha, z)
}

/// `p^uparrow(t; 0, y) = f_{y0}(t) / S(y)`, density w.r.t. `S^2 m`.
pub fn uparrow_density_from_zero(alpha: f64, y: f64, t: f64) -> f64 {
    hitting_density(alpha, y, t) / scale(alpha, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn brownian_forms() {
        let a = 0.5;
        let (t, x, y): (f64, f64, f64) = (1.3, 0.4, 1.1);
        let g = |u: f64| (-(u * u) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        assert!((transition_density(a, t, x, y) - 0.5 * (g(x - y) + g(x + y))).abs() < 1e-14);
        assert!((killed_density(a, t, x, y) - 0.5 * (g(x - y) - g(x + y))).abs() < 1e-14);
        let f = x * (-(x * x) / (2.0 * t)).exp() / (2.0 * PI * t.powi(3)).sqrt();
        assert!((hitting_density(a, x, t) - f).abs() < 1e-14);
        assert!((levy_density(a, 1.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((eigen_a(a, 0.7, 2.0) - (0.7 * 2.0f64).cos()).abs() < 1e-13);
        assert!((eigen_c(a, 0.7, 2.0) - (0.7 * 2.0f64).sin() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn small_and_large_argument_branches_meet() {
        for alpha in [0.25, 0.75] {
            let t = 1.0;
            let x = 5.0;
            let below = transition_density(alpha, t, x, 30.0 / x - 1e-9);
            let above = transition_density(alpha, t, x, 30.0 / x + 1e-9);
            assert!((below - above).abs() < 1e-8 * below);
            let below = killed_density(alpha, t, x, 30.0 / x - 1e-9);
            let above = killed_density(alpha, t, x, 30.0 / x + 1e-9);
            assert!((below - above).abs() < 1e-8 * below);
        }
    }

    #[test]
    fn density_at_origin() {
        let alpha = 0.25;
        let t: f64 = 2.0;
        let expected = t.powf(alpha - 1.0) / (2f64.powf(1.0 - alpha) * gamma(1.0 - alpha));
        assert!((transition_density(alpha, t, 0.0, 0.0) - expected).abs() < 1e-14);
        assert_eq!(killed_density(alpha, t, 0.0, 1.0), 0.0);
    }

    #[test]
    fn series_coefficients_reproduce_eigenfunctions() {
        let alpha = 0.25;
        let (x, g): (f64, f64) = (1.2, 3.0);
        let c: f64 = (0..60)
            .map(|n| (-g).powi(n as i32) * coefficient_c(alpha, x, n))
            .sum();
        let a: f64 = (0..60)
            .map(|n| (-g).powi(n as i32) * coefficient_a(alpha, x, n))
            .sum();
        assert!((c - eigen_c(alpha, x, g)).abs() < 1e-12);
        assert!((a - eigen_a(alpha, x, g)).abs() < 1e-12);
        assert!((coefficient_c(alpha, x, 0) - scale(alpha, x)).abs() < 1e-14);
    }
}
